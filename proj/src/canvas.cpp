// SPDX-License-Identifier: Apache-2.0
#include "fontcraft/canvas.hpp"

#include <string>

namespace fontcraft::canvas {

LayoutSpec derive_layout(int h, int w, int patch) {
    auto reject = [](const std::string& what) { throw ShapeError("derive_layout: " + what); };
    if (h <= 0 || w <= 0 || patch <= 0) reject("dimensions must be positive");
    if (h % patch != 0) reject("height " + std::to_string(h) + " not divisible by patch");
    if (w % patch != 0) reject("width " + std::to_string(w) + " not divisible by patch");
    if (w % 2 != 0) reject("width " + std::to_string(w) + " must be even");
    if ((w / 2) % patch != 0)
        reject("reference width " + std::to_string(w / 2) + " not divisible by patch");

    LayoutSpec s;
    s.h = h;
    s.w = w;
    s.patch = patch;
    s.w_ref = w / 2;
    const int raw_band = (w + 31) / 32;  // ceil(w / 32)
    s.w_band = ((raw_band + patch - 1) / patch) * patch;
    s.w_total = s.w_ref + s.w_band + s.w;
    return s;
}

CompositeCanvas compose_input(const ImageRGB& element_ref, const MaskGray& glyph_mask,
                              const LayoutSpec& layout) {
    if (element_ref.h != layout.h || element_ref.w != layout.w_ref)
        throw ShapeError("compose_input: element reference must be h x w_ref");
    if (glyph_mask.h != layout.h || glyph_mask.w != layout.w)
        throw ShapeError("compose_input: glyph mask must be h x w");
    if (!glyph_mask.is_binary()) throw ShapeError("compose_input: glyph mask must be binary");

    CompositeCanvas c;
    c.layout = layout;
    c.image = ImageRGB(layout.h, layout.w_total);
    c.image.paste(element_ref, 0, 0);
    c.inpaint_mask = MaskGray(layout.h, layout.w_total);
    c.inpaint_mask.paste(glyph_mask, 0, layout.w_ref + layout.w_band);
    c.column_labels.resize(layout.w_total);
    for (int x = 0; x < layout.w_total; ++x) c.column_labels[x] = layout.region_of_column(x);
    return c;
}

ImageRGB extract_glyph_region(const ImageRGB& canvas_image, const LayoutSpec& layout) {
    if (canvas_image.h != layout.h || canvas_image.w != layout.w_total)
        throw ShapeError("extract_glyph_region: canvas must be h x w_total");
    return canvas_image.crop(0, layout.w_ref + layout.w_band, layout.h, layout.w);
}

MaskGray extract_glyph_region(const MaskGray& canvas_mask, const LayoutSpec& layout) {
    if (canvas_mask.h != layout.h || canvas_mask.w != layout.w_total)
        throw ShapeError("extract_glyph_region: canvas must be h x w_total");
    return canvas_mask.crop(0, layout.w_ref + layout.w_band, layout.h, layout.w);
}

TokenLabelGrid token_region_labels(const LayoutSpec& layout) {
    TokenLabelGrid g;
    g.rows = layout.tokens_h();
    g.cols = layout.tokens_w();
    g.labels.resize(size_t(g.rows) * g.cols);
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c)
            // divisibility guarantees the whole patch shares one region
            g.labels[size_t(r) * g.cols + c] = layout.region_of_column(c * layout.patch);
    return g;
}

}  // namespace fontcraft::canvas
