// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "fontcraft/image.hpp"

namespace fontcraft {

enum class Region : uint8_t { REF = 0, BAND = 1, GLYPH = 2 };

// Horizontal in-context layout: [reference | separation band | glyph],
// all dimensions divisible by the token patch size so no token straddles a
// region boundary.
struct LayoutSpec {
    int h = 0;        // glyph (and canvas) height
    int w = 0;        // glyph width
    int patch = 0;    // token patch side
    int w_ref = 0;    // = w / 2
    int w_band = 0;   // smallest multiple of patch >= ceil(w / 32)
    int w_total = 0;  // w_ref + w_band + w

    int tokens_h() const { return h / patch; }
    int tokens_w() const { return w_total / patch; }
    int n_image_tokens() const { return tokens_h() * tokens_w(); }

    Region region_of_column(int x) const {
        if (x < w_ref) return Region::REF;
        if (x < w_ref + w_band) return Region::BAND;
        return Region::GLYPH;
    }

    bool operator==(const LayoutSpec&) const = default;
};

struct CompositeCanvas {
    ImageRGB image;        // h x w_total
    MaskGray inpaint_mask; // h x w_total; zero over REF and BAND columns
    std::vector<Region> column_labels;  // per-column region label, length w_total
    LayoutSpec layout;
};

// Per-token region labels, row-major over the (h/patch) x (w_total/patch) grid.
struct TokenLabelGrid {
    int rows = 0, cols = 0;
    std::vector<Region> labels;
    Region at(int r, int c) const { return labels[size_t(r) * cols + c]; }
};

namespace canvas {

LayoutSpec derive_layout(int h, int w, int patch);

CompositeCanvas compose_input(const ImageRGB& element_ref, const MaskGray& glyph_mask,
                              const LayoutSpec& layout);

ImageRGB extract_glyph_region(const ImageRGB& canvas_image, const LayoutSpec& layout);
MaskGray extract_glyph_region(const MaskGray& canvas_mask, const LayoutSpec& layout);

TokenLabelGrid token_region_labels(const LayoutSpec& layout);

}  // namespace canvas
}  // namespace fontcraft
