// SPDX-License-Identifier: Apache-2.0
#include "fontcraft/sampler.hpp"

#include <cmath>

namespace fontcraft::sampler {

using flow::field_from_image;
using flow::image_from_field;
using nn::TensorT;

std::optional<TensorT<float>> build_redirection_bias(const Denoiser<float>& model,
                                                     const CompositeCanvas& cond, AdapterKind kind,
                                                     const SampleConfig& spec,
                                                     const MaskGray* ref_coverage,
                                                     redirection::RegionSets* sets_out) {
    const LayoutSpec lay = cond.layout;
    const int l_txt = model.cfg.text_len;
    const TokenLabelGrid labels = canvas::token_region_labels(lay);

    redirection::SuppressionSpec sup;
    sup.l_txt = l_txt;
    sup.l_img = lay.n_image_tokens();

    if (spec.lambda < 1.0) {
        const TensorT<float> mask_tok =
            mmdit::downsample_mask_to_tokens<float>(cond.inpaint_mask, lay.patch);

        // reference foreground coverage per token
        TensorT<float> ref_fg({lay.n_image_tokens(), 1});
        if (kind == AdapterKind::AMORPHOUS) {
            ref_fg.fill(1.f);  // fully textured strip by construction
        } else {
            MaskGray cover;
            if (ref_coverage) {
                cover = *ref_coverage;
            } else {
                // external references: luminance-threshold fallback
                const ImageRGB strip = cond.image.crop(0, 0, lay.h, lay.w_ref);
                cover = threshold_luminance(strip, 0.1f);
            }
            if (cover.h != lay.h || cover.w != lay.w_ref)
                throw ShapeError("reference coverage must be h x w_ref");
            MaskGray full(lay.h, lay.w_total);
            full.paste(cover, 0, 0);
            ref_fg = mmdit::downsample_mask_to_tokens<float>(full, lay.patch);
        }

        const redirection::RegionSets sets =
            redirection::derive_region_sets(labels, mask_tok, ref_fg, spec.region_tau, l_txt);
        if (sets_out) *sets_out = sets;
        if (!sets.r_b.empty() && !sets.r_f.empty()) {
            redirection::SuppressionRule rule;
            rule.query_tokens = sets.r_b;
            rule.key_tokens = sets.r_f;
            rule.lambda = spec.lambda;
            sup.rules.push_back(std::move(rule));
        }
    }

    if (!spec.mix_cuts.empty()) {
        const auto bands = redirection::bands_from_cuts(lay, spec.mix_cuts);
        auto mix = redirection::build_region_mix_rules(lay, bands, spec.lambda, l_txt);
        for (auto& r : mix.rules) sup.rules.push_back(std::move(r));
    }

    if (sup.rules.empty()) return std::nullopt;
    return redirection::build_bias(sup, l_txt + sup.l_img).bias;
}

ImageRGB euler_sample(Denoiser<float>& model, const CompositeCanvas& cond,
                      const SampleConfig& spec, const MaskGray* ref_coverage,
                      SampleProbe* probe) {
    if (spec.steps < 1) throw ConfigError("euler_sample: steps must be >= 1");
    if (!(spec.lambda > 0.0 && spec.lambda <= 1.0))
        throw ConfigError("euler_sample: lambda outside (0,1]");
    if (!model.attached()) throw KindError("euler_sample: no adapter attached");
    const LayoutSpec lay = model.cfg.layout();
    if (!(cond.layout == lay)) throw ShapeError("euler_sample: canvas layout mismatch");

    const AdapterKind kind = model.attached()->kind;
    redirection::RegionSets sets;
    const auto bias = build_redirection_bias(model, cond, kind, spec, ref_coverage, &sets);

    mmdit::ForwardCtx<float> ctx;
    if (bias) ctx.logit_bias = &*bias;
    if (probe) {
        const int L = model.cfg.l_total();
        probe->query_mask.assign(L, 0);
        probe->key_mask.assign(L, 0);
        for (int i : sets.r_b) probe->query_mask[i] = 1;
        for (int j : sets.r_f) probe->key_mask[j] = 1;
        probe->attn.query_mask = &probe->query_mask;
        probe->attn.key_mask = &probe->key_mask;
        ctx.probe = &probe->attn;
    }

    // noise at t=1, data at t=0
    Rng rng(spec.seed);
    TensorT<float> x({lay.h, lay.w_total, 3});
    for (auto& v : x.v) v = float(rng.normal());

    const float dt = 1.f / float(spec.steps);
    for (int i = spec.steps; i >= 1; --i) {
        const float t = float(i) / float(spec.steps);
        const TensorT<float> vel = model.predict_velocity(x, cond.image, cond.inpaint_mask, t, ctx);
        for (int64_t j = 0; j < x.numel(); ++j) x.v[j] -= dt * vel.v[j];
        if (!x.all_finite())
            throw VerifyError("euler_sample: non-finite state at step " + std::to_string(i));
    }
    return image_from_field(x);
}

ImageRGB generate(Denoiser<float>& model, AdapterSet<float>& adapter, const ImageRGB& element_ref,
                  const MaskGray& glyph_mask, const SampleConfig& spec,
                  AdapterSet<float>* edge_adapter, SampleProbe* probe) {
    if (adapter.kind == AdapterKind::EDGE_REPAINT)
        throw KindError("generate: edge-repaint adapters cannot drive generation");
    const LayoutSpec lay = model.cfg.layout();
    const CompositeCanvas cond = canvas::compose_input(element_ref, glyph_mask, lay);

    model.attach(&adapter);
    const ImageRGB canvas_out = euler_sample(model, cond, spec, nullptr, probe);
    ImageRGB glyph = canvas::extract_glyph_region(canvas_out, lay);

    if (spec.edge_repaint) {
        if (!edge_adapter) throw KindError("generate: --repaint requires an edge adapter");
        glyph = edge_repaint(model, *edge_adapter, glyph, glyph_mask, spec.band_radius, spec);
    }
    return glyph;
}

ImageRGB assemble_mix_reference(const std::vector<MixElement>& elements, const LayoutSpec& layout) {
    if (elements.empty()) throw ConfigError("mix: no elements");
    double total = 0.0;
    for (const auto& e : elements) {
        if (e.weight <= 0.0) throw ConfigError("mix: weights must be positive");
        if (e.image.h != layout.h || e.image.w != layout.w_ref)
            throw ShapeError("mix: element strips must be h x w_ref");
        total += e.weight;
    }
    // band heights from cumulative weights; bands tile the strip exactly
    ImageRGB ref(layout.h, layout.w_ref);
    double cum = 0.0;
    int y = 0;
    for (size_t i = 0; i < elements.size(); ++i) {
        cum += elements[i].weight;
        const int y_end = i + 1 == elements.size()
                              ? layout.h
                              : int(std::lround(cum / total * layout.h));
        if (y_end < y) throw ConfigError("mix: placement overflow");
        // destination-aligned rows from the source strip
        for (int yy = y; yy < y_end; ++yy)
            std::copy_n(elements[i].image.px(yy, 0), size_t(layout.w_ref) * 3, ref.px(yy, 0));
        y = y_end;
    }
    return ref;
}

ImageRGB mix_styles(Denoiser<float>& model, AdapterSet<float>& adapter,
                    const std::vector<MixElement>& elements, const MaskGray& glyph_mask,
                    const SampleConfig& spec) {
    const ImageRGB ref = assemble_mix_reference(elements, model.cfg.layout());
    return generate(model, adapter, ref, glyph_mask, spec);
}

ImageRGB edge_repaint(Denoiser<float>& model, AdapterSet<float>& edge_adapter,
                      const ImageRGB& glyph_img, const MaskGray& glyph_mask, int band_radius,
                      const SampleConfig& spec) {
    if (edge_adapter.kind != AdapterKind::EDGE_REPAINT)
        throw KindError("edge_repaint: adapter kind must be edge_repaint");
    const LayoutSpec lay = model.cfg.layout();
    if (glyph_img.h != lay.h || glyph_img.w != lay.w)
        throw ShapeError("edge_repaint: glyph image must be h x w");
    if (glyph_mask.h != lay.h || glyph_mask.w != lay.w)
        throw ShapeError("edge_repaint: glyph mask must be h x w");
    if (band_radius == 0) return glyph_img;  // empty band, identity

    const MaskGray band = synthdata::edge_band(glyph_mask, band_radius);
    if (band.count_nonzero() == 0) throw ShapeError("edge_repaint: empty band");

    // canvas: the glyph image itself is the visual context
    CompositeCanvas cond;
    cond.layout = lay;
    cond.image = ImageRGB(lay.h, lay.w_total);
    const int x0 = (lay.w - lay.w_ref) / 2;
    cond.image.paste(glyph_img.crop(0, x0, lay.h, lay.w_ref), 0, 0);
    ImageRGB visible = glyph_img;
    for (int y = 0; y < lay.h; ++y)
        for (int x = 0; x < lay.w; ++x)
            if (band.at(y, x) != 0.f) {
                float* p = visible.px(y, x);
                p[0] = p[1] = p[2] = 0.f;
            }
    cond.image.paste(visible, 0, lay.w_ref + lay.w_band);
    cond.inpaint_mask = MaskGray(lay.h, lay.w_total);
    cond.inpaint_mask.paste(band, 0, lay.w_ref + lay.w_band);
    cond.column_labels.resize(lay.w_total);
    for (int x = 0; x < lay.w_total; ++x) cond.column_labels[x] = lay.region_of_column(x);

    model.attach(&edge_adapter);
    SampleConfig edge_spec = spec;
    edge_spec.lambda = 1.0;  // redirection is a generation-time control
    edge_spec.mix_cuts.clear();
    const ImageRGB canvas_out = euler_sample(model, cond, edge_spec);
    const ImageRGB repainted = canvas::extract_glyph_region(canvas_out, lay);

    // strict partial update: outside the band the input pixels pass through
    ImageRGB out = glyph_img;
    for (int y = 0; y < lay.h; ++y)
        for (int x = 0; x < lay.w; ++x)
            if (band.at(y, x) != 0.f) {
                const float* sp = repainted.px(y, x);
                float* dp = out.px(y, x);
                dp[0] = sp[0];
                dp[1] = sp[1];
                dp[2] = sp[2];
            }
    return out;
}

}  // namespace fontcraft::sampler
