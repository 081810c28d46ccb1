// SPDX-License-Identifier: Apache-2.0
#include "fontcraft/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "fontcraft/morph.hpp"
#include "fontcraft/png_io.hpp"

#include "json.hpp"

namespace fontcraft::synthdata {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- value noise ----------------------------------------------------------

namespace {

double lattice_value(uint64_t seed, int64_t ix, int64_t iy) {
    uint64_t h = splitmix64(seed ^ splitmix64(uint64_t(ix) * 0x9e3779b97f4a7c15ull) ^
                            splitmix64(uint64_t(iy) + 0x7f4a7c15ull));
    return double(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double value_noise(uint64_t seed, double x, double y) {
    const int64_t ix = int64_t(std::floor(x)), iy = int64_t(std::floor(y));
    const double fx = x - double(ix), fy = y - double(iy);
    const double v00 = lattice_value(seed, ix, iy);
    const double v10 = lattice_value(seed, ix + 1, iy);
    const double v01 = lattice_value(seed, ix, iy + 1);
    const double v11 = lattice_value(seed, ix + 1, iy + 1);
    const double ux = fade(fx), uy = fade(fy);
    const double a = v00 + (v10 - v00) * ux;
    const double b = v01 + (v11 - v01) * ux;
    return a + (b - a) * uy;
}

// Normalized fractal sum; 0 octaves degenerates to the constant 0.5.
double fbm(uint64_t seed, double x, double y, int octaves, double base_period) {
    if (octaves <= 0) return 0.5;
    double acc = 0.0, amp = 1.0, norm = 0.0, period = base_period;
    for (int o = 0; o < octaves; ++o) {
        acc += amp * value_noise(hash_combine(seed, uint64_t(o)), x / period, y / period);
        norm += amp;
        amp *= 0.5;
        period = std::max(1.0, period * 0.5);
    }
    return acc / norm;
}

std::array<float, 3> palette_lookup(const std::vector<std::array<float, 3>>& palette, double t) {
    if (palette.empty()) throw ShapeError("element palette is empty");
    if (palette.size() == 1) return palette[0];
    t = std::clamp(t, 0.0, 1.0);
    const double pos = t * double(palette.size() - 1);
    const int i = std::min(int(pos), int(palette.size()) - 2);
    const double f = pos - i;
    std::array<float, 3> out;
    for (int c = 0; c < 3; ++c)
        out[c] = float(palette[i][c] + (palette[i + 1][c] - palette[i][c]) * f);
    return out;
}

constexpr double kNoiseBasePeriod = 8.0;

}  // namespace

ImageRGB gen_amorphous_texture(const ElementSpec& spec, int h, int w) {
    if (spec.kind != AdapterKind::AMORPHOUS)
        throw KindError("gen_amorphous_texture: spec kind is not amorphous");
    ImageRGB img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double t = fbm(spec.seed, x, y, spec.noise_octaves, kNoiseBasePeriod);
            const auto rgb = palette_lookup(spec.palette, t);
            float* p = img.px(y, x);
            p[0] = rgb[0];
            p[1] = rgb[1];
            p[2] = rgb[2];
        }
    return img;
}

// ---- object sprites --------------------------------------------------------

namespace {

MaskGray shape_alpha(ShapeFamily family, int s, Rng& rng) {
    MaskGray alpha(s, s);
    const double cx = (s - 1) / 2.0, cy = (s - 1) / 2.0;
    const double R = s / 2.0 - 0.5;

    switch (family) {
        case ShapeFamily::DISC: {
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x)
                    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= R * R) alpha.at(y, x) = 1.f;
            break;
        }
        case ShapeFamily::STAR: {
            const int points = int(rng.uniform_int(5, 8));
            const double inner = R * 0.45;
            const double phase = rng.uniform(0.0, 2.0 * M_PI);
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x) {
                    const double dx = x - cx, dy = y - cy;
                    const double r = std::sqrt(dx * dx + dy * dy);
                    if (r > R) continue;
                    const double theta = std::atan2(dy, dx) - phase;
                    // piecewise radial limit alternating outer/inner radii
                    const double seg = theta * points / M_PI;
                    const double frac = seg - std::floor(seg);
                    const double lim =
                        (int64_t(std::floor(seg)) % 2 + 2) % 2 == 0
                            ? inner + (R - inner) * (1.0 - std::abs(2 * frac - 1))
                            : inner + (R - inner) * std::abs(2 * frac - 1);
                    if (r <= lim) alpha.at(y, x) = 1.f;
                }
            break;
        }
        case ShapeFamily::POLYGON: {
            const int n = int(rng.uniform_int(3, 8));
            const double phase = rng.uniform(0.0, 2.0 * M_PI);
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x) {
                    const double dx = x - cx, dy = y - cy;
                    const double r = std::sqrt(dx * dx + dy * dy);
                    if (r > R) continue;
                    const double theta = std::atan2(dy, dx) - phase;
                    // regular n-gon: apothem over cos of the local angle
                    const double a = std::fmod(std::abs(theta), 2.0 * M_PI / n) - M_PI / n;
                    const double lim = R * std::cos(M_PI / n) / std::cos(a);
                    if (r <= lim) alpha.at(y, x) = 1.f;
                }
            break;
        }
        case ShapeFamily::BLOB: {
            // smooth radial wobble from a few seeded harmonics, kept inside R
            double amps[3], phases[3];
            for (int i = 0; i < 3; ++i) {
                amps[i] = rng.uniform(0.05, 0.15);
                phases[i] = rng.uniform(0.0, 2.0 * M_PI);
            }
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x) {
                    const double dx = x - cx, dy = y - cy;
                    const double r = std::sqrt(dx * dx + dy * dy);
                    if (r > R) continue;
                    const double theta = std::atan2(dy, dx);
                    double wob = 0.0;
                    for (int i = 0; i < 3; ++i) wob += amps[i] * std::sin((i + 2) * theta + phases[i]);
                    const double lim = R * std::clamp(0.72 + wob, 0.3, 1.0);
                    if (r <= lim) alpha.at(y, x) = 1.f;
                }
            break;
        }
    }
    return alpha;
}

}  // namespace

std::vector<ObjectInstance> gen_object_instances(const ElementSpec& spec, int n) {
    if (spec.kind != AdapterKind::OBJECT)
        throw KindError("gen_object_instances: spec kind is not object");
    if (n < 1) throw ShapeError("gen_object_instances: n must be >= 1");
    Rng root(hash_combine(spec.seed, hash_str("instances")));
    std::vector<ObjectInstance> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng rng = root.fork(uint64_t(i));
        const int s = int(rng.uniform_int(spec.size_lo, spec.size_hi));
        ObjectInstance inst;
        inst.alpha = shape_alpha(spec.shape_family, s, rng);
        // textured fill from the element palette
        ElementSpec tex = spec;
        tex.kind = AdapterKind::AMORPHOUS;
        tex.seed = hash_combine(spec.seed, uint64_t(1000 + i));
        tex.noise_octaves = std::max(1, spec.noise_octaves);
        inst.sprite = gen_amorphous_texture(tex, s, s);
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x)
                if (inst.alpha.at(y, x) == 0.f) {
                    float* p = inst.sprite.px(y, x);
                    p[0] = p[1] = p[2] = 0.f;
                }
        out.push_back(std::move(inst));
    }
    return out;
}

// ---- glyph rendering --------------------------------------------------------

namespace {

struct Seg {
    double x1, y1, x2, y2;
};

const std::vector<Seg>& glyph_segments(char id) {
    static const std::unordered_map<char, std::vector<Seg>> table = [] {
        std::unordered_map<char, std::vector<Seg>> t;
        t['A'] = {{0, 1, 0.5, 0}, {0.5, 0, 1, 1}, {0.2, 0.62, 0.8, 0.62}};
        t['B'] = {{0, 0, 0, 1},       {0, 0, 0.7, 0.08},   {0.7, 0.08, 0.7, 0.45},
                  {0.7, 0.45, 0, 0.5}, {0, 0.5, 0.8, 0.56}, {0.8, 0.56, 0.8, 0.94},
                  {0.8, 0.94, 0, 1}};
        t['C'] = {{1, 0.15, 0.5, 0}, {0.5, 0, 0, 0.25}, {0, 0.25, 0, 0.75}, {0, 0.75, 0.5, 1},
                  {0.5, 1, 1, 0.85}};
        t['D'] = {{0, 0, 0, 1},        {0, 0, 0.6, 0.08},  {0.6, 0.08, 1, 0.4},
                  {1, 0.4, 1, 0.6},    {1, 0.6, 0.6, 0.92}, {0.6, 0.92, 0, 1}};
        t['E'] = {{1, 0, 0, 0}, {0, 0, 0, 1}, {0, 1, 1, 1}, {0, 0.5, 0.75, 0.5}};
        t['F'] = {{1, 0, 0, 0}, {0, 0, 0, 1}, {0, 0.5, 0.7, 0.5}};
        t['G'] = {{1, 0.15, 0.5, 0},  {0.5, 0, 0, 0.3},   {0, 0.3, 0, 0.7}, {0, 0.7, 0.5, 1},
                  {0.5, 1, 1, 0.8},   {1, 0.8, 1, 0.55},  {1, 0.55, 0.6, 0.55}};
        t['H'] = {{0, 0, 0, 1}, {1, 0, 1, 1}, {0, 0.5, 1, 0.5}};
        t['I'] = {{0.5, 0, 0.5, 1}};
        t['J'] = {{1, 0, 1, 0.75}, {1, 0.75, 0.6, 1}, {0.6, 1, 0.2, 0.85}};
        t['K'] = {{0, 0, 0, 1}, {1, 0, 0, 0.55}, {0.25, 0.4, 1, 1}};
        t['L'] = {{0, 0, 0, 1}, {0, 1, 1, 1}};
        t['M'] = {{0, 1, 0, 0}, {0, 0, 0.5, 0.55}, {0.5, 0.55, 1, 0}, {1, 0, 1, 1}};
        t['N'] = {{0, 1, 0, 0}, {0, 0, 1, 1}, {1, 1, 1, 0}};
        t['O'] = {{0.5, 0, 1, 0.3}, {1, 0.3, 1, 0.7}, {1, 0.7, 0.5, 1}, {0.5, 1, 0, 0.7},
                  {0, 0.7, 0, 0.3}, {0, 0.3, 0.5, 0}};
        t['P'] = {{0, 1, 0, 0}, {0, 0, 0.8, 0.1}, {0.8, 0.1, 0.8, 0.45}, {0.8, 0.45, 0, 0.55}};
        t['Q'] = {{0.5, 0, 1, 0.3}, {1, 0.3, 1, 0.7}, {1, 0.7, 0.5, 1}, {0.5, 1, 0, 0.7},
                  {0, 0.7, 0, 0.3}, {0, 0.3, 0.5, 0}, {0.6, 0.7, 1, 1}};
        t['R'] = {{0, 1, 0, 0}, {0, 0, 0.8, 0.1}, {0.8, 0.1, 0.8, 0.45}, {0.8, 0.45, 0, 0.55},
                  {0.3, 0.55, 1, 1}};
        t['S'] = {{0.9, 0.1, 0.3, 0}, {0.3, 0, 0.05, 0.2}, {0.05, 0.2, 0.95, 0.75},
                  {0.95, 0.75, 0.6, 1}, {0.6, 1, 0.05, 0.92}};
        t['T'] = {{0, 0, 1, 0}, {0.5, 0, 0.5, 1}};
        t['U'] = {{0, 0, 0, 0.75}, {0, 0.75, 0.5, 1}, {0.5, 1, 1, 0.75}, {1, 0.75, 1, 0}};
        t['V'] = {{0, 0, 0.5, 1}, {0.5, 1, 1, 0}};
        t['W'] = {{0, 0, 0.25, 1}, {0.25, 1, 0.5, 0.4}, {0.5, 0.4, 0.75, 1}, {0.75, 1, 1, 0}};
        t['X'] = {{0, 0, 1, 1}, {1, 0, 0, 1}};
        t['Y'] = {{0, 0, 0.5, 0.5}, {1, 0, 0.5, 0.5}, {0.5, 0.5, 0.5, 1}};
        t['Z'] = {{0, 0, 1, 0}, {1, 0, 0, 1}, {0, 1, 1, 1}};
        t['0'] = {{0.5, 0, 1, 0.3}, {1, 0.3, 1, 0.7}, {1, 0.7, 0.5, 1}, {0.5, 1, 0, 0.7},
                  {0, 0.7, 0, 0.3}, {0, 0.3, 0.5, 0}, {0.3, 0.75, 0.7, 0.25}};
        t['1'] = {{0.25, 0.2, 0.5, 0}, {0.5, 0, 0.5, 1}};
        t['2'] = {{0, 0.2, 0.4, 0}, {0.4, 0, 0.9, 0.15}, {0.9, 0.15, 0, 1}, {0, 1, 1, 1}};
        t['3'] = {{0, 0.05, 0.8, 0.1}, {0.8, 0.1, 0.45, 0.45}, {0.45, 0.45, 0.9, 0.7},
                  {0.9, 0.7, 0.5, 1}, {0.5, 1, 0, 0.92}};
        t['4'] = {{0.7, 1, 0.7, 0}, {0.7, 0, 0, 0.7}, {0, 0.7, 1, 0.7}};
        t['5'] = {{1, 0, 0, 0}, {0, 0, 0, 0.45}, {0, 0.45, 0.7, 0.4}, {0.7, 0.4, 0.95, 0.7},
                  {0.95, 0.7, 0.6, 1}, {0.6, 1, 0, 0.95}};
        t['6'] = {{0.8, 0, 0.2, 0.35}, {0.2, 0.35, 0, 0.75}, {0, 0.75, 0.5, 1}, {0.5, 1, 1, 0.75},
                  {1, 0.75, 0.5, 0.5}, {0.5, 0.5, 0.05, 0.6}};
        t['7'] = {{0, 0, 1, 0}, {1, 0, 0.35, 1}};
        t['8'] = {{0.5, 0.45, 0.15, 0.25}, {0.15, 0.25, 0.5, 0}, {0.5, 0, 0.85, 0.25},
                  {0.85, 0.25, 0.5, 0.45}, {0.5, 0.45, 0.1, 0.72}, {0.1, 0.72, 0.5, 1},
                  {0.5, 1, 0.9, 0.72}, {0.9, 0.72, 0.5, 0.45}};
        t['9'] = {{0.2, 1, 0.8, 0.65}, {0.8, 0.65, 1, 0.25}, {1, 0.25, 0.5, 0},
                  {0.5, 0, 0, 0.25}, {0, 0.25, 0.5, 0.5}, {0.5, 0.5, 0.95, 0.4}};
        return t;
    }();
    auto it = table.find(id);
    if (it == table.end()) throw ShapeError(std::string("unknown glyph id: ") + id);
    return it->second;
}

double point_segment_dist2(double px, double py, const Seg& s) {
    const double vx = s.x2 - s.x1, vy = s.y2 - s.y1;
    const double wx = px - s.x1, wy = py - s.y1;
    const double vv = vx * vx + vy * vy;
    double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (s.x1 + t * vx), dy = py - (s.y1 + t * vy);
    return dx * dx + dy * dy;
}

}  // namespace

bool is_known_glyph(char glyph_id) {
    return (glyph_id >= 'A' && glyph_id <= 'Z') || (glyph_id >= '0' && glyph_id <= '9');
}

MaskGray render_glyph_mask(char glyph_id, int h, int w, double stroke_width, double rotation_deg) {
    if (!is_known_glyph(glyph_id)) throw ShapeError(std::string("unknown glyph id: ") + glyph_id);
    if (stroke_width <= 0.0) throw ShapeError("render_glyph_mask: stroke width must be positive");
    const auto& segs = glyph_segments(glyph_id);

    // map glyph-space segments into pixel space (margin, then rotation about center)
    constexpr double margin = 0.12;
    const double theta = rotation_deg * M_PI / 180.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double cx = w / 2.0, cy = h / 2.0;
    std::vector<Seg> px_segs;
    px_segs.reserve(segs.size());
    for (const auto& s : segs) {
        auto tx = [&](double gx, double gy) {
            const double ux = (margin + gx * (1 - 2 * margin)) * w - cx;
            const double uy = (margin + gy * (1 - 2 * margin)) * h - cy;
            return std::pair<double, double>{cx + ux * ct - uy * st, cy + ux * st + uy * ct};
        };
        const auto [ax, ay] = tx(s.x1, s.y1);
        const auto [bx, by] = tx(s.x2, s.y2);
        px_segs.push_back({ax, ay, bx, by});
    }

    const double half2 = (stroke_width / 2.0) * (stroke_width / 2.0);
    MaskGray mask(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double pxc = x + 0.5, pyc = y + 0.5;
            for (const auto& s : px_segs)
                if (point_segment_dist2(pxc, pyc, s) <= half2) {
                    mask.at(y, x) = 1.f;
                    break;
                }
        }
    if (mask.count_nonzero() == 0) throw ShapeError("render_glyph_mask: empty mask");
    return mask;
}

MaskGray refine_mask(const MaskGray& mask, int morph_radius, double sigma) {
    if (!mask.is_binary()) throw ShapeError("refine_mask: input must be binary");
    MaskGray m = morph::close(morph::open(mask, morph_radius), morph_radius);
    m = morph::gaussian_blur(m, sigma);
    return threshold_mask(m, 0.5f);
}

MaskGray segment_foreground(const ImageRGB& image, float threshold) {
    if (!(threshold > 0.f && threshold < 1.f))
        throw ShapeError("segment_foreground: threshold outside (0,1)");
    return morph::close(threshold_luminance(image, threshold), 1);
}

ImageRGB synth_ground_truth(const ElementSpec& element, const MaskGray& glyph_mask) {
    if (!glyph_mask.is_binary()) throw ShapeError("synth_ground_truth: mask must be binary");
    if (glyph_mask.count_nonzero() == 0) throw ShapeError("synth_ground_truth: empty mask");
    const int h = glyph_mask.h, w = glyph_mask.w;

    if (element.kind == AdapterKind::AMORPHOUS) {
        ImageRGB tex = gen_amorphous_texture(element, h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (glyph_mask.at(y, x) == 0.f) {
                    float* p = tex.px(y, x);
                    p[0] = p[1] = p[2] = 0.f;
                }
        return tex;
    }

    // OBJECT: stamp instances at mask-interior centers until coverage >= 0.7
    const auto pool = gen_object_instances(element, 8);
    std::vector<std::pair<int, int>> interior;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (glyph_mask.at(y, x) != 0.f) interior.emplace_back(y, x);

    ImageRGB out(h, w);
    MaskGray covered(h, w);
    const int64_t mask_area = glyph_mask.count_nonzero();
    Rng rng(hash_combine(element.seed, hash_str("pack")));
    for (int attempt = 0; attempt < 256; ++attempt) {
        int64_t cov = 0;
        for (size_t i = 0; i < covered.v.size(); ++i)
            cov += covered.v[i] != 0.f && glyph_mask.v[i] != 0.f;
        if (double(cov) / double(mask_area) >= 0.7) break;

        const auto& inst = pool[size_t(rng.uniform_int(0, int64_t(pool.size()) - 1))];
        const auto [cy, cx] = interior[size_t(rng.uniform_int(0, int64_t(interior.size()) - 1))];
        const int s = inst.alpha.h;
        const int y0 = cy - s / 2, x0 = cx - s / 2;
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                const int yy = y0 + y, xx = x0 + x;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                if (inst.alpha.at(y, x) == 0.f) continue;
                const float* sp = inst.sprite.px(y, x);
                float* dp = out.px(yy, xx);
                dp[0] = sp[0];
                dp[1] = sp[1];
                dp[2] = sp[2];
                covered.at(yy, xx) = 1.f;
            }
    }
    return out;
}

ReferenceRegion build_reference_region(const ImageRGB& gt_glyph, const MaskGray& glyph_mask,
                                       const ElementSpec& element, const LayoutSpec& layout,
                                       uint64_t rng_seed) {
    const int h = gt_glyph.h, w = gt_glyph.w, w_ref = layout.w_ref;
    if (h != layout.h || w != layout.w) throw ShapeError("build_reference_region: glyph size mismatch");
    Rng rng(rng_seed);
    ReferenceRegion out;
    out.image = ImageRGB(h, w_ref);

    if (element.kind == AdapterKind::AMORPHOUS) {
        // two crops centered at random mask-interior points, stacked vertically
        std::vector<std::pair<int, int>> interior;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (glyph_mask.at(y, x) != 0.f) interior.emplace_back(y, x);
        const int h1 = (h + 1) / 2, h2 = h - h1;
        int offset = 0;
        for (int part = 0; part < 2; ++part) {
            const int ph = part == 0 ? h1 : h2;
            int cy = h / 2, cx = w / 2;
            if (!interior.empty()) {
                const auto [y, x] = interior[size_t(rng.uniform_int(0, int64_t(interior.size()) - 1))];
                cy = y;
                cx = x;
            } else {
                out.fallback_center_crop = true;
            }
            const int y0 = std::clamp(cy - ph / 2, 0, h - ph);
            const int x0 = std::clamp(cx - w_ref / 2, 0, w - w_ref);
            out.image.paste(gt_glyph.crop(y0, x0, ph, w_ref), offset, 0);
            offset += ph;
        }
        out.coverage = MaskGray(h, w_ref);
        out.coverage.v.assign(out.coverage.v.size(), 1.f);
        return out;
    }

    // OBJECT: 2..4 instances on a black strip, one per vertical slot (no overlap)
    const int n = int(rng.uniform_int(2, 4));
    auto pool = gen_object_instances(element, n);
    out.coverage = MaskGray(h, w_ref);
    const int slot_h = h / n;
    for (int i = 0; i < n; ++i) {
        ObjectInstance inst = pool[i];
        const int fit = std::max(4, std::min(slot_h, w_ref) - 2);
        if (inst.alpha.h > fit) {
            inst.sprite = resize_bilinear(inst.sprite, fit, fit);
            inst.alpha = resize_mask(inst.alpha, fit, fit);
            for (int y = 0; y < fit; ++y)
                for (int x = 0; x < fit; ++x)
                    if (inst.alpha.at(y, x) == 0.f) {
                        float* p = inst.sprite.px(y, x);
                        p[0] = p[1] = p[2] = 0.f;
                    }
        }
        const int s = inst.alpha.h;
        const int y0 = i * slot_h + (slot_h - s) / 2;
        const int x0 = (w_ref - s) / 2;
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                if (inst.alpha.at(y, x) == 0.f) continue;
                const int yy = y0 + y, xx = x0 + x;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w_ref) continue;
                const float* sp = inst.sprite.px(y, x);
                float* dp = out.image.px(yy, xx);
                dp[0] = sp[0];
                dp[1] = sp[1];
                dp[2] = sp[2];
                out.coverage.at(yy, xx) = 1.f;
            }
    }
    return out;
}

namespace {

constexpr const char* kGlyphSet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

struct GlyphComposite {
    MaskGray mask;  // h x w union of placed glyphs
    int k = 0;
    std::vector<int> glyph_ids;
    std::vector<double> rotations;
    std::vector<std::array<int, 4>> slots;
};

GlyphComposite compose_glyph_region(const LayoutSpec& layout, Rng& rng) {
    GlyphComposite out;
    const int h = layout.h, w = layout.w;
    out.k = int(rng.uniform_int(1, 4));
    std::vector<std::array<int, 4>> slots;
    if (out.k == 1) {
        slots.push_back({0, 0, h, w});
    } else if (out.k == 2) {
        slots.push_back({0, 0, h, w / 2});
        slots.push_back({0, w / 2, h, w / 2});
    } else {
        const int hh = h / 2, hw = w / 2;
        slots.push_back({0, 0, hh, hw});
        slots.push_back({0, hw, hh, w - hw});
        slots.push_back({hh, 0, h - hh, hw});
        if (out.k == 4) slots.push_back({hh, hw, h - hh, w - hw});
    }
    out.mask = MaskGray(h, w);
    for (int i = 0; i < out.k; ++i) {
        const int gid = int(rng.uniform_int(0, 35));
        const double rot = rng.uniform(0.0, 360.0);
        const auto [sy, sx, sh, sw] = slots[i];
        const double stroke = std::max(2.0, std::min(sh, sw) / 8.0);
        const MaskGray glyph = render_glyph_mask(kGlyphSet[gid], sh, sw, stroke, rot);
        for (int y = 0; y < sh; ++y)
            for (int x = 0; x < sw; ++x)
                if (glyph.at(y, x) != 0.f) out.mask.at(sy + y, sx + x) = 1.f;
        out.glyph_ids.push_back(gid);
        out.rotations.push_back(rot);
        out.slots.push_back(slots[i]);
    }
    return out;
}

TrainingTriplet assemble_triplet(const LayoutSpec& layout, const ImageRGB& reference,
                                 const MaskGray& coverage, const MaskGray& inpaint_region,
                                 const ImageRGB& glyph_image, const ImageRGB& visible_glyph,
                                 AdapterKind kind) {
    TrainingTriplet t;
    t.element_kind = kind;
    t.ref_coverage = coverage;
    t.input = ImageRGB(layout.h, layout.w_total);
    t.input.paste(reference, 0, 0);
    t.input.paste(visible_glyph, 0, layout.w_ref + layout.w_band);
    t.glyph_mask = MaskGray(layout.h, layout.w_total);
    t.glyph_mask.paste(inpaint_region, 0, layout.w_ref + layout.w_band);
    t.gt = ImageRGB(layout.h, layout.w_total);
    t.gt.paste(reference, 0, 0);
    t.gt.paste(glyph_image, 0, layout.w_ref + layout.w_band);
    return t;
}

}  // namespace

TrainingTriplet build_training_triplet(const ElementSpec& element, const LayoutSpec& layout,
                                       uint64_t rng_seed) {
    Rng rng(rng_seed);
    Rng glyph_rng = rng.fork("glyphs");
    const GlyphComposite comp = compose_glyph_region(layout, glyph_rng);
    const ImageRGB gt_glyph = synth_ground_truth(element, comp.mask);
    const ReferenceRegion ref = build_reference_region(
        gt_glyph, comp.mask, element, layout, hash_combine(rng_seed, hash_str("ref")));

    TrainingTriplet t = assemble_triplet(layout, ref.image, ref.coverage, comp.mask, gt_glyph,
                                         ImageRGB(layout.h, layout.w), element.kind);
    t.provenance = {element.seed, rng_seed,      comp.k,
                    comp.glyph_ids, comp.rotations, comp.slots,
                    ref.fallback_center_crop};
    return t;
}

MaskGray edge_band(const MaskGray& glyph_mask, int band_radius) {
    const MaskGray d = morph::dilate(glyph_mask, band_radius);
    const MaskGray e = morph::erode(glyph_mask, band_radius);
    MaskGray band(glyph_mask.h, glyph_mask.w);
    for (size_t i = 0; i < band.v.size(); ++i)
        band.v[i] = (d.v[i] != e.v[i]) ? 1.f : 0.f;
    return band;
}

TrainingTriplet build_edge_triplet(const ElementSpec& element, const LayoutSpec& layout,
                                   int band_radius, uint64_t rng_seed) {
    Rng rng(rng_seed);
    Rng glyph_rng = rng.fork("glyphs");
    const GlyphComposite comp = compose_glyph_region(layout, glyph_rng);
    const ImageRGB gt_glyph = synth_ground_truth(element, comp.mask);
    const MaskGray band = edge_band(comp.mask, band_radius);

    // reference context is the glyph image itself, center-cropped to w_ref
    const int x0 = (layout.w - layout.w_ref) / 2;
    const ImageRGB ref = gt_glyph.crop(0, x0, layout.h, layout.w_ref);
    MaskGray coverage(layout.h, layout.w_ref);
    coverage.v.assign(coverage.v.size(), 1.f);

    ImageRGB visible = gt_glyph;
    for (int y = 0; y < layout.h; ++y)
        for (int x = 0; x < layout.w; ++x)
            if (band.at(y, x) != 0.f) {
                float* p = visible.px(y, x);
                p[0] = p[1] = p[2] = 0.f;
            }

    TrainingTriplet t =
        assemble_triplet(layout, ref, coverage, band, gt_glyph, visible, AdapterKind::EDGE_REPAINT);
    t.provenance = {element.seed, rng_seed,      comp.k,
                    comp.glyph_ids, comp.rotations, comp.slots,
                    false};
    return t;
}

ElementSpec random_element_spec(AdapterKind kind, uint64_t seed) {
    Rng rng(hash_combine(seed, hash_str("element_spec")));
    ElementSpec spec;
    spec.kind = kind;
    spec.seed = seed;
    const int anchors = int(rng.uniform_int(2, 4));
    spec.palette.clear();
    for (int i = 0; i < anchors; ++i)
        spec.palette.push_back({float(rng.uniform(0.35, 1.0)), float(rng.uniform(0.35, 1.0)),
                                float(rng.uniform(0.35, 1.0))});
    spec.noise_octaves = int(rng.uniform_int(2, 4));
    spec.shape_family = ShapeFamily(rng.uniform_int(0, 3));
    spec.size_lo = 10;
    spec.size_hi = 18;
    return spec;
}

// ---- manifest ---------------------------------------------------------------

void write_manifest(const std::string& path, const DatasetManifest& m) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write manifest: " + path);
    for (const auto& r : m.records) {
        json j = {{"id", r.id},
                  {"kind", r.kind},
                  {"seed", r.seed},
                  {"paths",
                   {{"input", r.input_path}, {"glyph_mask", r.glyph_mask_path}, {"gt", r.gt_path}}},
                  {"split", r.split}};
        f << j.dump() << "\n";
    }
    if (!f) throw IoError("manifest write failed: " + path);
}

DatasetManifest read_manifest(const std::string& path, bool check_paths) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read manifest: " + path);
    DatasetManifest m;
    std::set<uint64_t> seeds;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("malformed manifest line: " + std::string(e.what()));
        }
        ManifestRecord r;
        r.id = j.at("id");
        r.kind = j.at("kind");
        r.seed = j.at("seed");
        r.input_path = j.at("paths").at("input");
        r.glyph_mask_path = j.at("paths").at("glyph_mask");
        r.gt_path = j.at("paths").at("gt");
        r.split = j.value("split", "train");
        if (!seeds.insert(r.seed).second)
            throw IoError("manifest seeds are not unique (seed " + std::to_string(r.seed) + ")");
        if (check_paths)
            for (const auto& p : {r.input_path, r.glyph_mask_path, r.gt_path})
                if (!fs::exists(p)) throw IoError("manifest references missing file: " + p);
        m.records.push_back(std::move(r));
    }
    return m;
}

DatasetManifest synthesize_dataset(const DatasetParams& params, const std::string& out_dir) {
    const LayoutSpec layout = canvas::derive_layout(params.h, params.w, params.patch);
    fs::create_directories(out_dir);
    DatasetManifest manifest;
    Rng root(params.seed);
    int counter = 0;

    auto emit = [&](const TrainingTriplet& t, const std::string& kind, uint64_t seed) {
        ManifestRecord r;
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "%06d", counter++);
        r.id = idbuf;
        r.kind = kind;
        r.seed = seed;
        const std::string stem = out_dir + "/" + r.id;
        r.input_path = stem + "_input.png";
        r.glyph_mask_path = stem + "_mask.png";
        r.gt_path = stem + "_gt.png";
        write_png(r.input_path, t.input);
        write_png(r.glyph_mask_path, t.glyph_mask);
        write_png(r.gt_path, t.gt);
        r.split = root.fork(hash_combine(seed, hash_str("split"))).uniform() < params.val_frac
                      ? "val"
                      : "train";
        manifest.records.push_back(std::move(r));
    };

    for (int pass = 0; pass < 2; ++pass) {
        const AdapterKind kind = pass == 0 ? AdapterKind::AMORPHOUS : AdapterKind::OBJECT;
        const int n = pass == 0 ? params.n_amorphous : params.n_object;
        for (int e = 0; e < n; ++e) {
            const uint64_t espec_seed = hash_combine(params.seed, hash_str(to_string(kind)) + e * 2654435761u);
            const ElementSpec spec = random_element_spec(kind, espec_seed);
            for (int i = 0; i < params.triplets_per_element; ++i) {
                const uint64_t tseed = hash_combine(espec_seed, uint64_t(i) + 1);
                emit(build_training_triplet(spec, layout, tseed), to_string(kind), tseed);
            }
        }
    }
    for (int e = 0; e < params.n_edge; ++e) {
        const AdapterKind kind = e % 2 == 0 ? AdapterKind::AMORPHOUS : AdapterKind::OBJECT;
        const uint64_t espec_seed = hash_combine(params.seed, hash_str("edge_elem") + e);
        const ElementSpec spec = random_element_spec(kind, espec_seed);
        const uint64_t tseed = hash_combine(espec_seed, hash_str("edge_triplet"));
        emit(build_edge_triplet(spec, layout, params.edge_band_radius, tseed), "edge_repaint",
             tseed);
    }

    write_manifest(out_dir + "/manifest.jsonl", manifest);
    return manifest;
}

}  // namespace fontcraft::synthdata
