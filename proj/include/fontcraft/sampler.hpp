// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "fontcraft/flow.hpp"
#include "fontcraft/redirection.hpp"

namespace fontcraft::sampler {

using mmdit::AdapterKind;
using mmdit::AdapterSet;
using mmdit::Denoiser;

struct SampleConfig {
    int steps = 32;
    uint64_t seed = 0;
    double lambda = 1.0;            // suppression factor, (0,1]; 1 disables redirection
    std::vector<double> mix_cuts;   // fractional height cuts for region-aware mixing
    bool edge_repaint = false;
    int band_radius = 2;
    float region_tau = 0.5f;        // token coverage threshold for R_b / R_f
};

// Optional measurement hooks for one sampling run.
struct SampleProbe {
    nn::AttnProbe attn;                       // filled when region masks are set
    std::vector<uint8_t> query_mask, key_mask;  // joint-sequence membership
};

// Builds the suppression bias for a conditioned canvas: the dehallucination
// rule (R_b queries vs R_f keys) when lambda < 1, plus region-mix rules when
// cuts are given. Returns nullopt when no rule applies.
std::optional<nn::TensorT<float>> build_redirection_bias(
    const Denoiser<float>& model, const CompositeCanvas& cond, AdapterKind kind,
    const SampleConfig& spec, const MaskGray* ref_coverage,
    redirection::RegionSets* sets_out = nullptr);

// Integrates the learned velocity field from seeded noise at t=1 down to
// t=0 with N uniform Euler steps; returns the clamped canvas.
ImageRGB euler_sample(Denoiser<float>& model, const CompositeCanvas& cond,
                      const SampleConfig& spec, const MaskGray* ref_coverage = nullptr,
                      SampleProbe* probe = nullptr);

// Full pipeline: compose the in-context canvas, sample, crop the glyph.
ImageRGB generate(Denoiser<float>& model, AdapterSet<float>& adapter, const ImageRGB& element_ref,
                  const MaskGray& glyph_mask, const SampleConfig& spec,
                  AdapterSet<float>* edge_adapter = nullptr, SampleProbe* probe = nullptr);

struct MixElement {
    ImageRGB image;  // h x w_ref strip
    double weight = 1.0;
};

// Assembles the reference strip from weighted horizontal bands of the given
// elements (band heights proportional to weight), then generates.
ImageRGB mix_styles(Denoiser<float>& model, AdapterSet<float>& adapter,
                    const std::vector<MixElement>& elements, const MaskGray& glyph_mask,
                    const SampleConfig& spec);

// Builds the reference strip only (exposed for tests and the CLI).
ImageRGB assemble_mix_reference(const std::vector<MixElement>& elements, const LayoutSpec& layout);

// Repaints a narrow band along the glyph contour; pixels outside the band are
// copied from the input bit-exactly. band_radius 0 is the identity.
ImageRGB edge_repaint(Denoiser<float>& model, AdapterSet<float>& edge_adapter,
                      const ImageRGB& glyph_img, const MaskGray& glyph_mask, int band_radius,
                      const SampleConfig& spec);

}  // namespace fontcraft::sampler
