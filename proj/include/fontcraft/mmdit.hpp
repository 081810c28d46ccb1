// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "fontcraft/canvas.hpp"
#include "fontcraft/nn.hpp"

namespace fontcraft::mmdit {

using nn::Graph;
using nn::NodeId;
using nn::ParamStore;
using nn::TensorT;

enum class AdapterKind { AMORPHOUS, OBJECT, EDGE_REPAINT };

inline const char* to_string(AdapterKind k) {
    switch (k) {
        case AdapterKind::AMORPHOUS: return "amorphous";
        case AdapterKind::OBJECT: return "object";
        case AdapterKind::EDGE_REPAINT: return "edge_repaint";
    }
    return "?";
}
inline AdapterKind adapter_kind_from_string(const std::string& s) {
    if (s == "amorphous") return AdapterKind::AMORPHOUS;
    if (s == "object") return AdapterKind::OBJECT;
    if (s == "edge_repaint" || s == "edge") return AdapterKind::EDGE_REPAINT;
    throw KindError("unknown adapter kind: " + s);
}

struct DenoiserConfig {
    int depth = 4;
    int dim = 128;  // token channel dim C
    int heads = 4;
    int patch = 2;
    int text_len = 8;
    int time_dim = 256;
    int glyph_h = 64;
    int glyph_w = 64;
    int lora_rank = 4;
    float lora_alpha = 8.f;
    bool use_cma = true;  // build-time switch for the transparency check

    // noisy canvas (3) + conditioning image (3) + inpaint mask (1)
    static constexpr int cond_channels = 7;

    LayoutSpec layout() const { return canvas::derive_layout(glyph_h, glyph_w, patch); }
    int l_img() const { return layout().n_image_tokens(); }
    int l_total() const { return text_len + l_img(); }
    int token_in_dim() const { return patch * patch * cond_channels; }
    int token_out_dim() const { return patch * patch * 3; }

    nlohmann::json to_json() const {
        return {{"depth", depth},       {"dim", dim},
                {"heads", heads},       {"patch", patch},
                {"text_len", text_len}, {"time_dim", time_dim},
                {"glyph_h", glyph_h},   {"glyph_w", glyph_w},
                {"lora_rank", lora_rank}, {"lora_alpha", lora_alpha}};
    }
    static DenoiserConfig from_json(const nlohmann::json& j) {
        DenoiserConfig c;
        c.depth = j.at("depth");
        c.dim = j.at("dim");
        c.heads = j.at("heads");
        c.patch = j.at("patch");
        c.text_len = j.at("text_len");
        c.time_dim = j.at("time_dim");
        c.glyph_h = j.at("glyph_h");
        c.glyph_w = j.at("glyph_w");
        c.lora_rank = j.at("lora_rank");
        c.lora_alpha = j.at("lora_alpha");
        return c;
    }
    bool same_architecture(const DenoiserConfig& o) const {
        return depth == o.depth && dim == o.dim && heads == o.heads && patch == o.patch &&
               text_len == o.text_len && time_dim == o.time_dim && glyph_h == o.glyph_h &&
               glyph_w == o.glyph_w;
    }
};

// Trainable parameter bundle for one element type: LoRA deltas for every
// linear inside every block, plus that block's CMA weights.
template <class S>
struct AdapterSet {
    AdapterKind kind = AdapterKind::AMORPHOUS;
    int rank = 4;
    S alpha = S(8);
    ParamStore<S> params;
};

// Per-token area average of the inpaint mask; shape [l_img, 1].
template <class S>
TensorT<S> downsample_mask_to_tokens(const MaskGray& mask, int p) {
    if (mask.h % p != 0 || mask.w % p != 0)
        throw ShapeError("downsample_mask_to_tokens: dims not divisible by patch");
    const int th = mask.h / p, tw = mask.w / p;
    TensorT<S> out({th * tw, 1});
    for (int r = 0; r < th; ++r)
        for (int c = 0; c < tw; ++c) {
            S acc = 0;
            for (int py = 0; py < p; ++py)
                for (int px = 0; px < p; ++px) acc += S(mask.at(r * p + py, c * p + px));
            out.v[size_t(r) * tw + c] = acc / S(p * p);
        }
    return out;
}

template <class S>
struct ForwardCtx {
    const TensorT<S>* logit_bias = nullptr;  // [L_total, L_total], constant
    nn::AttnProbe* probe = nullptr;
};

template <class S>
class Denoiser {
public:
    DenoiserConfig cfg;
    ParamStore<S> params;

    struct Lin {
        int w = -1, b = -1;
        int d_in = 0, d_out = 0;
        std::string name;
    };
    struct Block {
        // [0] = text stream, [1] = image stream
        std::array<Lin, 2> q, k, v, o, fc1, fc2, mod;
        Lin cma1, cma2;
    };

    Denoiser() = default;

    // Fresh model; every tensor draws from an rng forked by parameter name so
    // builds with different flags still produce identical shared weights.
    static Denoiser init(const DenoiserConfig& cfg, uint64_t seed) {
        Denoiser m;
        m.cfg = cfg;
        Rng root(seed);
        const int C = cfg.dim, Dt = cfg.time_dim;
        auto normal = [&](const std::string& name, std::vector<int> sh, double std) {
            Rng r = root.fork(name);
            return m.params.add(name, nn::random_normal<S>(std::move(sh), r, S(std)));
        };
        auto zeros = [&](const std::string& name, std::vector<int> sh) {
            return m.params.add(name, TensorT<S>::zeros(std::move(sh)));
        };

        m.patch_embed_ = {normal("patch_embed.w", {C, cfg.token_in_dim()}, 0.02),
                          zeros("patch_embed.b", {C}), cfg.token_in_dim(), C, "patch_embed"};
        m.pos_table_ = normal("pos_table", {cfg.l_img(), C}, 0.02);
        m.null_text_ = normal("null_text", {cfg.text_len, C}, 0.02);
        m.time1_ = {normal("time.lin1.w", {Dt, Dt}, 0.02), zeros("time.lin1.b", {Dt}), Dt, Dt,
                    "time.lin1"};
        m.time2_ = {normal("time.lin2.w", {Dt, Dt}, 0.02), zeros("time.lin2.b", {Dt}), Dt, Dt,
                    "time.lin2"};

        const char* streams[2] = {"txt", "img"};
        for (int i = 0; i < cfg.depth; ++i) {
            Block blk;
            for (int s = 0; s < 2; ++s) {
                const std::string p = "block" + std::to_string(i) + "." + streams[s] + ".";
                auto mk = [&](const char* tag, int d_in, int d_out, double std) {
                    Lin l;
                    l.name = p + tag;
                    l.w = std == 0.0 ? zeros(l.name + ".w", {d_out, d_in})
                                     : normal(l.name + ".w", {d_out, d_in}, std);
                    l.b = zeros(l.name + ".b", {d_out});
                    l.d_in = d_in;
                    l.d_out = d_out;
                    return l;
                };
                blk.q[s] = mk("q", C, C, 0.02);
                blk.k[s] = mk("k", C, C, 0.02);
                blk.v[s] = mk("v", C, C, 0.02);
                blk.o[s] = mk("o", C, C, 0.02);
                blk.fc1[s] = mk("fc1", C, 4 * C, 0.02);
                blk.fc2[s] = mk("fc2", 4 * C, C, 0.02);
                blk.mod[s] = mk("mod", Dt, 6 * C, 0.0);  // adaLN-zero
            }
            const std::string cp = "block" + std::to_string(i) + ".cma.";
            blk.cma1 = {normal(cp + "lin1.w", {64, C + 1}, 0.02), zeros(cp + "lin1.b", {64}),
                        C + 1, 64, cp + "lin1"};
            // zero-initialized restore layer: the adapter is transparent at start
            blk.cma2 = {zeros(cp + "lin2.w", {C, 64}), zeros(cp + "lin2.b", {C}), 64, C,
                        cp + "lin2"};
            m.blocks_.push_back(blk);
        }
        m.final_gain_ = m.params.add("final_norm.gain", TensorT<S>::full({C}, S(1)));
        m.unembed_ = {zeros("unembed.w", {cfg.token_out_dim(), C}), zeros("unembed.b", {cfg.token_out_dim()}),
                      C, cfg.token_out_dim(), "unembed"};
        return m;
    }

    // Rebuild the reference structure over an existing store (checkpoint load).
    static Denoiser from_store(const DenoiserConfig& cfg, ParamStore<S> store) {
        Denoiser m = init(cfg, 0);
        for (auto& e : m.params.entries) {
            const int src = store.find(e.name);
            if (src < 0) throw IoError("checkpoint missing parameter: " + e.name);
            if (store[src].value.shape != e.value.shape)
                throw ShapeError("checkpoint shape mismatch for " + e.name);
            e.value = std::move(store[src].value);
        }
        return m;
    }

    const std::vector<Block>& blocks() const { return blocks_; }

    // Every linear inside every block, in deterministic order.
    template <class Fn>
    void for_each_block_linear(Fn&& fn) const {
        for (const auto& blk : blocks_)
            for (int s = 0; s < 2; ++s)
                for (const Lin* l : {&blk.q[s], &blk.k[s], &blk.v[s], &blk.o[s], &blk.fc1[s],
                                     &blk.fc2[s], &blk.mod[s]})
                    fn(*l);
    }

    // Attach (or detach with nullptr) an adapter set; only references swap.
    void attach(AdapterSet<S>* adapter) {
        adapter_ = adapter;
        lora_.clear();
        cma_override_.clear();
        if (!adapter) return;
        for_each_block_linear([&](const Lin& l) {
            const int down = adapter->params.find(l.name + ".lora.down");
            const int up = adapter->params.find(l.name + ".lora.up");
            if (down < 0 || up < 0) throw KindError("adapter does not cover layer " + l.name);
            lora_[l.name] = {down, up};
        });
        for (const auto& blk : blocks_)
            for (const Lin* l : {&blk.cma1, &blk.cma2}) {
                const int w = adapter->params.find(l->name + ".w");
                const int b = adapter->params.find(l->name + ".b");
                if (w < 0 || b < 0) throw KindError("adapter missing CMA params for " + l->name);
                cma_override_[l->name] = {w, b};
            }
    }
    AdapterSet<S>* attached() const { return adapter_; }

    // Joint text+image forward over pre-patchified tokens; returns the
    // velocity token node [l_img, patch*patch*3].
    NodeId forward_tokens(Graph<S>& g, const TensorT<S>& in_tokens, S t,
                          const TensorT<S>& mask_tokens, const ForwardCtx<S>& ctx = {}) {
        if (in_tokens.rows() != cfg.l_img() || in_tokens.cols() != cfg.token_in_dim())
            throw ShapeError("forward_tokens: bad input token shape");
        if (mask_tokens.rows() != cfg.l_img() || mask_tokens.cols() != 1)
            throw ShapeError("forward_tokens: bad mask token shape");
        if (ctx.logit_bias && (ctx.logit_bias->rows() != cfg.l_total() ||
                               ctx.logit_bias->cols() != cfg.l_total()))
            throw ShapeError("forward_tokens: bias must match total token count");

        NodeId img = lin(g, g.constant(in_tokens), patch_embed_);
        img = add(g, img, g.param(params, pos_table_));
        NodeId txt = g.param(params, null_text_);

        NodeId t_emb = lin(g, g.constant(nn::timestep_basis<S>(t, cfg.time_dim)), time1_);
        t_emb = lin(g, gelu(g, t_emb), time2_);
        const NodeId tg = gelu(g, t_emb);

        const NodeId mask_node = g.constant(mask_tokens);
        const int T = cfg.text_len, C = cfg.dim;

        for (auto& blk : blocks_) {
            // per-stream modulation: [shift, scale, gate] x [attn, mlp]
            std::array<std::array<NodeId, 6>, 2> mods;
            for (int s = 0; s < 2; ++s) {
                const NodeId mv = lin(g, tg, blk.mod[s]);
                for (int c = 0; c < 6; ++c) mods[s][c] = slice_cols(g, mv, c * C, (c + 1) * C);
            }

            auto modulate = [&](NodeId x, int s, int base) {
                NodeId y = rms_norm(g, x);
                y = mul_rowvec(g, y, mods[s][base + 1], S(1));
                return add_rowvec(g, y, mods[s][base + 0]);
            };

            const NodeId tn = modulate(txt, 0, 0);
            const NodeId xn = modulate(img, 1, 0);
            const NodeId q = concat_rows(g, lin(g, tn, blk.q[0]), lin(g, xn, blk.q[1]));
            const NodeId k = concat_rows(g, lin(g, tn, blk.k[0]), lin(g, xn, blk.k[1]));
            const NodeId v = concat_rows(g, lin(g, tn, blk.v[0]), lin(g, xn, blk.v[1]));
            const NodeId a = attention(g, q, k, v, cfg.heads, ctx.logit_bias, ctx.probe);
            txt = add(g, txt, mul_rowvec(g, lin(g, slice_rows(g, a, 0, T), blk.o[0]), mods[0][2]));
            img = add(g, img,
                      mul_rowvec(g, lin(g, slice_rows(g, a, T, cfg.l_total()), blk.o[1]), mods[1][2]));

            const NodeId tm = modulate(txt, 0, 3);
            txt = add(g, txt, mul_rowvec(g, lin(g, gelu(g, lin(g, tm, blk.fc1[0])), blk.fc2[0]),
                                         mods[0][5]));
            const NodeId xm = modulate(img, 1, 3);
            img = add(g, img, mul_rowvec(g, lin(g, gelu(g, lin(g, xm, blk.fc1[1])), blk.fc2[1]),
                                         mods[1][5]));

            if (cfg.use_cma) img = cma_forward(g, img, mask_node, blk);
        }

        NodeId out = rms_norm(g, img, g.param(params, final_gain_));
        return lin(g, out, unembed_);
    }

    // Residual shape-control signal from the block CMA.
    NodeId cma_forward(Graph<S>& g, NodeId img_tokens, NodeId mask_tokens, const Block& blk) {
        NodeId h = concat_cols(g, img_tokens, mask_tokens);
        h = lin(g, h, blk.cma1);
        h = gelu(g, h);
        h = lin(g, h, blk.cma2);
        return add(g, img_tokens, h);
    }

    // Pixel-space convenience: predict the velocity field for a noisy canvas.
    // Fields are [h, w, 3] channel-interleaved tensors.
    TensorT<S> predict_velocity(const TensorT<S>& x_t, const ImageRGB& cond_image,
                                const MaskGray& cond_mask, S t, const ForwardCtx<S>& ctx = {}) {
        const LayoutSpec lay = cfg.layout();
        if (x_t.shape != std::vector<int>{lay.h, lay.w_total, 3})
            throw ShapeError("predict_velocity: x_t does not match layout");
        if (cond_image.h != lay.h || cond_image.w != lay.w_total || cond_mask.h != lay.h ||
            cond_mask.w != lay.w_total)
            throw ShapeError("predict_velocity: conditioning does not match layout");

        const TensorT<S> tokens = make_input_tokens(x_t, cond_image, cond_mask);
        const TensorT<S> mask_tok = downsample_mask_to_tokens<S>(cond_mask, cfg.patch);
        Graph<S> g;
        g.recording = false;
        const NodeId out = forward_tokens(g, tokens, t, mask_tok, ctx);
        TensorT<S> field({lay.h, lay.w_total, 3});
        nn::unpatchify(g.val(out), lay.h, lay.w_total, cfg.patch, 3, field.data());
        return field;
    }

    // [x_t (3) | conditioning image (3) | inpaint mask (1)] patchified.
    TensorT<S> make_input_tokens(const TensorT<S>& x_t, const ImageRGB& cond_image,
                                 const MaskGray& cond_mask) const {
        const LayoutSpec lay = cfg.layout();
        std::vector<std::function<S(int, int)>> planes;
        for (int c = 0; c < 3; ++c)
            planes.push_back([&x_t, c](int y, int x) { return x_t.v[(size_t(y) * x_t.shape[1] + x) * 3 + c]; });
        for (int c = 0; c < 3; ++c)
            planes.push_back([&cond_image, c](int y, int x) { return S(cond_image.px(y, x)[c]); });
        planes.push_back([&cond_mask](int y, int x) { return S(cond_mask.at(y, x)); });
        return nn::patchify<S>(planes, lay.h, lay.w_total, cfg.patch);
    }

    const Lin& unembed_layer() const { return unembed_; }

private:
    // Linear through the attached adapter: CMA layers are wholly owned by the
    // adapter; block linears get a LoRA branch on top of the frozen base.
    NodeId lin(Graph<S>& g, NodeId x, const Lin& l) {
        if (adapter_) {
            if (auto it = cma_override_.find(l.name); it != cma_override_.end()) {
                NodeId y = matmul(g, x, g.param(adapter_->params, it->second.first), false, true);
                return add_rowvec(g, y, g.param(adapter_->params, it->second.second));
            }
        }
        NodeId y = matmul(g, x, g.param(params, l.w), false, true);
        y = add_rowvec(g, y, g.param(params, l.b));
        if (adapter_) {
            if (auto it = lora_.find(l.name); it != lora_.end()) {
                NodeId tnode = matmul(g, x, g.param(adapter_->params, it->second.first), false, true);
                NodeId u = matmul(g, tnode, g.param(adapter_->params, it->second.second), false, true);
                y = add_scaled(g, y, u, adapter_->alpha / S(adapter_->rank));
            }
        }
        return y;
    }

    std::vector<Block> blocks_;
    Lin patch_embed_, time1_, time2_, unembed_;
    int pos_table_ = -1, null_text_ = -1, final_gain_ = -1;
    AdapterSet<S>* adapter_ = nullptr;
    std::unordered_map<std::string, std::pair<int, int>> lora_;
    std::unordered_map<std::string, std::pair<int, int>> cma_override_;
};

// Fresh adapter for one element type: LoRA down ~ N(0, 1/sqrt(d_in)), up = 0
// (inert at start), CMA weights copied from the base model.
template <class S>
AdapterSet<S> make_adapter(const Denoiser<S>& model, AdapterKind kind, uint64_t seed) {
    AdapterSet<S> a;
    a.kind = kind;
    a.rank = model.cfg.lora_rank;
    a.alpha = S(model.cfg.lora_alpha);
    Rng root(seed);
    model.for_each_block_linear([&](const typename Denoiser<S>::Lin& l) {
        Rng r = root.fork(l.name);
        a.params.add(l.name + ".lora.down",
                     nn::random_normal<S>({a.rank, l.d_in}, r, S(1.0 / std::sqrt(double(l.d_in)))));
        a.params.add(l.name + ".lora.up", TensorT<S>::zeros({l.d_out, a.rank}));
    });
    for (const auto& blk : model.blocks())
        for (const auto* l : {&blk.cma1, &blk.cma2}) {
            const auto& wsrc = model.params[model.params.find(l->name + ".w")].value;
            const auto& bsrc = model.params[model.params.find(l->name + ".b")].value;
            a.params.add(l->name + ".w", wsrc);
            a.params.add(l->name + ".b", bsrc);
        }
    return a;
}

}  // namespace fontcraft::mmdit
