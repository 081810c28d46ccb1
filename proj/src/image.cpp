// SPDX-License-Identifier: Apache-2.0
#include "fontcraft/image.hpp"

#include <algorithm>
#include <cmath>

namespace fontcraft {

namespace {
float clamp01(float x) {
    if (!std::isfinite(x)) throw ShapeError("image value not finite");
    return x < 0.f ? 0.f : (x > 1.f ? 1.f : x);
}
}  // namespace

ImageRGB::ImageRGB(int height, int width, std::vector<float> data)
    : h(height), w(width), v(std::move(data)) {
    if (int64_t(v.size()) != int64_t(h) * w * 3) throw ShapeError("ImageRGB data size mismatch");
    for (auto& x : v) x = clamp01(x);
}

MaskGray::MaskGray(int height, int width, std::vector<float> data)
    : h(height), w(width), v(std::move(data)) {
    if (int64_t(v.size()) != int64_t(h) * w) throw ShapeError("MaskGray data size mismatch");
    for (auto& x : v) x = clamp01(x);
}

ImageRGB ImageRGB::crop(int y0, int x0, int ch, int cw) const {
    if (y0 < 0 || x0 < 0 || y0 + ch > h || x0 + cw > w) throw ShapeError("crop out of bounds");
    ImageRGB out(ch, cw);
    for (int y = 0; y < ch; ++y)
        std::copy_n(px(y0 + y, x0), size_t(cw) * 3, out.px(y, 0));
    return out;
}

void ImageRGB::paste(const ImageRGB& src, int y0, int x0) {
    if (y0 < 0 || x0 < 0 || y0 + src.h > h || x0 + src.w > w) throw ShapeError("paste out of bounds");
    for (int y = 0; y < src.h; ++y)
        std::copy_n(src.px(y, 0), size_t(src.w) * 3, px(y0 + y, x0));
}

bool MaskGray::is_binary() const {
    for (float x : v)
        if (x != 0.f && x != 1.f) return false;
    return true;
}

int64_t MaskGray::count_nonzero() const {
    int64_t n = 0;
    for (float x : v) n += (x != 0.f);
    return n;
}

MaskGray MaskGray::crop(int y0, int x0, int ch, int cw) const {
    if (y0 < 0 || x0 < 0 || y0 + ch > h || x0 + cw > w) throw ShapeError("crop out of bounds");
    MaskGray out(ch, cw);
    for (int y = 0; y < ch; ++y)
        std::copy_n(&v[size_t(y0 + y) * w + x0], cw, &out.v[size_t(y) * cw]);
    return out;
}

void MaskGray::paste(const MaskGray& src, int y0, int x0) {
    if (y0 < 0 || x0 < 0 || y0 + src.h > h || x0 + src.w > w) throw ShapeError("paste out of bounds");
    for (int y = 0; y < src.h; ++y)
        std::copy_n(&src.v[size_t(y) * src.w], src.w, &v[size_t(y0 + y) * w + x0]);
}

MaskGray threshold_luminance(const ImageRGB& img, float tau) {
    MaskGray out(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) out.at(y, x) = img.luminance(y, x) > tau ? 1.f : 0.f;
    return out;
}

MaskGray threshold_mask(const MaskGray& m, float tau) {
    MaskGray out(m.h, m.w);
    for (size_t i = 0; i < m.v.size(); ++i) out.v[i] = m.v[i] > tau ? 1.f : 0.f;
    return out;
}

double mask_intersection_over_union(const MaskGray& a, const MaskGray& b) {
    if (a.h != b.h || a.w != b.w) throw ShapeError("IoU size mismatch");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        const bool pa = a.v[i] != 0.f, pb = b.v[i] != 0.f;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni == 0 ? 0.0 : double(inter) / double(uni);
}

namespace {
// Sample with clamped edges; sx/sy are source coordinates of the output pixel center.
template <class GetF>
float bilinear(GetF get, int h, int w, float sy, float sx) {
    sy = std::max(0.f, std::min(float(h) - 1.f, sy));
    sx = std::max(0.f, std::min(float(w) - 1.f, sx));
    const int y0 = int(sy), x0 = int(sx);
    const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const float fy = sy - y0, fx = sx - x0;
    return get(y0, x0) * (1 - fy) * (1 - fx) + get(y0, x1) * (1 - fy) * fx +
           get(y1, x0) * fy * (1 - fx) + get(y1, x1) * fy * fx;
}
}  // namespace

ImageRGB resize_bilinear(const ImageRGB& src, int oh, int ow) {
    ImageRGB out(oh, ow);
    const float ry = float(src.h) / oh, rx = float(src.w) / ow;
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            for (int c = 0; c < 3; ++c)
                out.px(y, x)[c] = bilinear([&](int yy, int xx) { return src.px(yy, xx)[c]; },
                                           src.h, src.w, (y + 0.5f) * ry - 0.5f, (x + 0.5f) * rx - 0.5f);
    return out;
}

MaskGray resize_mask(const MaskGray& src, int oh, int ow) {
    MaskGray out(oh, ow);
    const float ry = float(src.h) / oh, rx = float(src.w) / ow;
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            out.at(y, x) = bilinear([&](int yy, int xx) { return src.at(yy, xx); }, src.h, src.w,
                                    (y + 0.5f) * ry - 0.5f, (x + 0.5f) * rx - 0.5f) > 0.5f
                               ? 1.f
                               : 0.f;
    return out;
}

}  // namespace fontcraft
