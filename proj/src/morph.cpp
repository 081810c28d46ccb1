// SPDX-License-Identifier: Apache-2.0
#include "fontcraft/morph.hpp"

#include <cmath>

namespace fontcraft::morph {

namespace {

std::vector<std::pair<int, int>> disc_offsets(int radius) {
    std::vector<std::pair<int, int>> offs;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dy * dy + dx * dx <= radius * radius) offs.emplace_back(dy, dx);
    return offs;
}

MaskGray morph_apply(const MaskGray& m, int radius, bool is_dilate) {
    if (radius <= 0) return m;
    const auto offs = disc_offsets(radius);
    MaskGray out(m.h, m.w);
    for (int y = 0; y < m.h; ++y) {
        for (int x = 0; x < m.w; ++x) {
            bool hit = !is_dilate;
            for (const auto& [dy, dx] : offs) {
                const int yy = y + dy, xx = x + dx;
                // outside the image counts as background
                const bool on =
                    yy >= 0 && yy < m.h && xx >= 0 && xx < m.w && m.at(yy, xx) != 0.f;
                if (is_dilate && on) {
                    hit = true;
                    break;
                }
                if (!is_dilate && !on) {
                    hit = false;
                    break;
                }
            }
            out.at(y, x) = hit ? 1.f : 0.f;
        }
    }
    return out;
}

}  // namespace

MaskGray dilate(const MaskGray& m, int radius) { return morph_apply(m, radius, true); }
MaskGray erode(const MaskGray& m, int radius) { return morph_apply(m, radius, false); }
MaskGray open(const MaskGray& m, int radius) { return dilate(erode(m, radius), radius); }
MaskGray close(const MaskGray& m, int radius) { return erode(dilate(m, radius), radius); }

MaskGray gaussian_blur(const MaskGray& m, double sigma) {
    if (sigma <= 0.0) return m;
    const int half = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<float> kernel(2 * half + 1);
    double sum = 0.0;
    for (int i = -half; i <= half; ++i) {
        kernel[i + half] = float(std::exp(-0.5 * (i * i) / (sigma * sigma)));
        sum += kernel[i + half];
    }
    for (auto& k : kernel) k = float(k / sum);

    MaskGray tmp(m.h, m.w), out(m.h, m.w);
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            float acc = 0.f;
            for (int i = -half; i <= half; ++i) {
                const int xx = x + i;
                if (xx >= 0 && xx < m.w) acc += kernel[i + half] * m.at(y, xx);
            }
            tmp.at(y, x) = acc;
        }
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            float acc = 0.f;
            for (int i = -half; i <= half; ++i) {
                const int yy = y + i;
                if (yy >= 0 && yy < m.h) acc += kernel[i + half] * tmp.at(yy, x);
            }
            out.at(y, x) = acc;
        }
    return out;
}

std::vector<std::pair<int, int>> contour_pixels(const MaskGray& m) {
    std::vector<std::pair<int, int>> pts;
    auto outside = [&](int y, int x) {
        return y < 0 || y >= m.h || x < 0 || x >= m.w || m.at(y, x) == 0.f;
    };
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x)
            if (m.at(y, x) != 0.f && (outside(y - 1, x) || outside(y + 1, x) || outside(y, x - 1) ||
                                      outside(y, x + 1)))
                pts.emplace_back(y, x);
    return pts;
}

}  // namespace fontcraft::morph
