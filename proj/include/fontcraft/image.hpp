// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "fontcraft/common.hpp"

namespace fontcraft {

// Interleaved RGB, values in [0,1] (clamped on construction from raw data).
struct ImageRGB {
    int h = 0, w = 0;
    std::vector<float> v;  // h*w*3

    ImageRGB() = default;
    ImageRGB(int height, int width) : h(height), w(width), v(size_t(height) * width * 3, 0.f) {}
    ImageRGB(int height, int width, std::vector<float> data);

    float* px(int y, int x) { return &v[(size_t(y) * w + x) * 3]; }
    const float* px(int y, int x) const { return &v[(size_t(y) * w + x) * 3]; }

    float luminance(int y, int x) const {
        const float* p = px(y, x);
        return 0.2126f * p[0] + 0.7152f * p[1] + 0.0722f * p[2];
    }

    ImageRGB crop(int y0, int x0, int ch, int cw) const;
    void paste(const ImageRGB& src, int y0, int x0);
    bool same_dims(const ImageRGB& o) const { return h == o.h && w == o.w; }
};

// Grayscale mask, values in [0,1]. Binary iff every value is exactly 0 or 1.
struct MaskGray {
    int h = 0, w = 0;
    std::vector<float> v;  // h*w

    MaskGray() = default;
    MaskGray(int height, int width) : h(height), w(width), v(size_t(height) * width, 0.f) {}
    MaskGray(int height, int width, std::vector<float> data);

    float& at(int y, int x) { return v[size_t(y) * w + x]; }
    float at(int y, int x) const { return v[size_t(y) * w + x]; }

    bool is_binary() const;
    int64_t count_nonzero() const;

    MaskGray crop(int y0, int x0, int ch, int cw) const;
    void paste(const MaskGray& src, int y0, int x0);
};

// Threshold a luminance image into a binary mask (strictly greater-than).
MaskGray threshold_luminance(const ImageRGB& img, float tau);
MaskGray threshold_mask(const MaskGray& m, float tau);

double mask_intersection_over_union(const MaskGray& a, const MaskGray& b);

// Bilinear resize; masks are re-thresholded at 0.5 so they stay binary.
ImageRGB resize_bilinear(const ImageRGB& src, int oh, int ow);
MaskGray resize_mask(const MaskGray& src, int oh, int ow);

}  // namespace fontcraft
