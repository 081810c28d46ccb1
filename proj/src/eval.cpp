// SPDX-License-Identifier: Apache-2.0
#include "fontcraft/eval.hpp"

#include <algorithm>
#include <cmath>

#include "fontcraft/morph.hpp"

namespace fontcraft::eval {

PatchFeature patch_features(const ImageRGB& patch) {
    PatchFeature f;
    const int n = patch.h * patch.w;
    if (n == 0) throw ShapeError("patch_features: empty patch");

    double mean[3] = {0, 0, 0};
    for (int y = 0; y < patch.h; ++y)
        for (int x = 0; x < patch.w; ++x)
            for (int c = 0; c < 3; ++c) mean[c] += patch.px(y, x)[c];
    for (int c = 0; c < 3; ++c) {
        mean[c] /= n;
        f.v[c] = mean[c];
    }

    // upper-triangular RGB covariance: rr rg rb gg gb bb
    double cov[6] = {0, 0, 0, 0, 0, 0};
    for (int y = 0; y < patch.h; ++y)
        for (int x = 0; x < patch.w; ++x) {
            const float* p = patch.px(y, x);
            const double d[3] = {p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]};
            cov[0] += d[0] * d[0];
            cov[1] += d[0] * d[1];
            cov[2] += d[0] * d[2];
            cov[3] += d[1] * d[1];
            cov[4] += d[1] * d[2];
            cov[5] += d[2] * d[2];
        }
    for (int i = 0; i < 6; ++i) f.v[3 + i] = cov[i] / n;

    // gradient-orientation histogram, central differences on luminance
    double hist[8] = {0};
    double total = 0.0;
    for (int y = 1; y + 1 < patch.h; ++y)
        for (int x = 1; x + 1 < patch.w; ++x) {
            const double gx = 0.5 * (patch.luminance(y, x + 1) - patch.luminance(y, x - 1));
            const double gy = 0.5 * (patch.luminance(y + 1, x) - patch.luminance(y - 1, x));
            const double mag = std::sqrt(gx * gx + gy * gy);
            if (mag <= 0.0) continue;
            double theta = std::atan2(gy, gx);
            if (theta < 0) theta += M_PI;       // orientation, not direction
            if (theta >= M_PI) theta -= M_PI;   // guard the atan2(0,-x) edge
            int bin = int(theta / M_PI * 8.0);
            bin = std::clamp(bin, 0, 7);
            hist[bin] += mag;
            total += mag;
        }
    if (total > 0.0)
        for (int i = 0; i < 8; ++i) f.v[9 + i] = hist[i] / total;
    return f;
}

std::vector<ImageRGB> sample_edge_patches(const ImageRGB& image, const MaskGray& mask, int n,
                                          int size, uint64_t seed) {
    if (mask.h != image.h || mask.w != image.w)
        throw ShapeError("sample_edge_patches: image/mask size mismatch");
    if (mask.count_nonzero() == 0) throw ShapeError("sample_edge_patches: empty mask");
    if (size > std::min(image.h, image.w) / 2)
        throw ShapeError("sample_edge_patches: patch size too large");
    const auto contour = morph::contour_pixels(mask);
    if (contour.empty()) throw ShapeError("sample_edge_patches: empty contour");

    Rng rng(seed);
    std::vector<ImageRGB> patches;
    patches.reserve(n);
    for (int i = 0; i < n; ++i) {
        const auto [cy, cx] = contour[size_t(rng.uniform_int(0, int64_t(contour.size()) - 1))];
        const int y0 = std::clamp(cy - size / 2, 0, image.h - size);
        const int x0 = std::clamp(cx - size / 2, 0, image.w - size);
        patches.push_back(image.crop(y0, x0, size, size));
    }
    return patches;
}

// ---- symmetric eigensolver (cyclic Jacobi) ---------------------------------

void sym_eig(const std::vector<double>& m, int d, std::vector<double>& eigvals,
             std::vector<double>& eigvecs) {
    if (int(m.size()) != d * d) throw ShapeError("sym_eig: size mismatch");
    std::vector<double> a = m;
    eigvecs.assign(size_t(d) * d, 0.0);
    for (int i = 0; i < d; ++i) eigvecs[size_t(i) * d + i] = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += a[size_t(p) * d + q] * a[size_t(p) * d + q];
        if (off < 1e-24) break;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) {
                const double apq = a[size_t(p) * d + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[size_t(p) * d + p], aqq = a[size_t(q) * d + q];
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t), s = t * c;
                for (int i = 0; i < d; ++i) {
                    const double aip = a[size_t(i) * d + p], aiq = a[size_t(i) * d + q];
                    a[size_t(i) * d + p] = c * aip - s * aiq;
                    a[size_t(i) * d + q] = s * aip + c * aiq;
                }
                for (int i = 0; i < d; ++i) {
                    const double api = a[size_t(p) * d + i], aqi = a[size_t(q) * d + i];
                    a[size_t(p) * d + i] = c * api - s * aqi;
                    a[size_t(q) * d + i] = s * api + c * aqi;
                }
                for (int i = 0; i < d; ++i) {
                    const double vip = eigvecs[size_t(i) * d + p], viq = eigvecs[size_t(i) * d + q];
                    eigvecs[size_t(i) * d + p] = c * vip - s * viq;
                    eigvecs[size_t(i) * d + q] = s * vip + c * viq;
                }
            }
    }
    eigvals.resize(d);
    for (int i = 0; i < d; ++i) eigvals[i] = a[size_t(i) * d + i];
}

namespace {

// B = V diag(f(lambda)) V^T for symmetric input
std::vector<double> sym_apply(const std::vector<double>& m, int d, double (*f)(double)) {
    std::vector<double> vals, vecs;
    sym_eig(m, d, vals, vecs);
    std::vector<double> out(size_t(d) * d, 0.0);
    for (int k = 0; k < d; ++k) {
        const double fv = f(std::max(0.0, vals[k]));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                out[size_t(i) * d + j] += fv * vecs[size_t(i) * d + k] * vecs[size_t(j) * d + k];
    }
    return out;
}

double sqrt_clamped(double x) { return std::sqrt(x); }

}  // namespace

double trace_sqrt_product(const std::vector<double>& s1, const std::vector<double>& s2, int d) {
    const std::vector<double> r1 = sym_apply(s1, d, sqrt_clamped);
    // M = r1 s2 r1, symmetrized against rounding
    std::vector<double> tmp(size_t(d) * d, 0.0), msym(size_t(d) * d, 0.0);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) {
            const double v = r1[size_t(i) * d + k];
            if (v == 0.0) continue;
            for (int j = 0; j < d; ++j) tmp[size_t(i) * d + j] += v * s2[size_t(k) * d + j];
        }
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) {
            const double v = tmp[size_t(i) * d + k];
            if (v == 0.0) continue;
            for (int j = 0; j < d; ++j) msym[size_t(i) * d + j] += v * r1[size_t(k) * d + j];
        }
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const double av = 0.5 * (msym[size_t(i) * d + j] + msym[size_t(j) * d + i]);
            msym[size_t(i) * d + j] = msym[size_t(j) * d + i] = av;
        }
    std::vector<double> vals, vecs;
    sym_eig(msym, d, vals, vecs);
    double tr = 0.0;
    for (double v : vals) tr += std::sqrt(std::max(0.0, v));
    return tr;
}

FDScore patch_frechet(const std::vector<PatchFeature>& a, const std::vector<PatchFeature>& b) {
    if (a.empty() || b.empty()) throw ShapeError("patch_frechet: empty feature set");
    constexpr int d = kFeatureDim;

    auto fit = [](const std::vector<PatchFeature>& s, std::vector<double>& mu,
                  std::vector<double>& cov) {
        const int n = int(s.size());
        mu.assign(d, 0.0);
        for (const auto& f : s)
            for (int i = 0; i < d; ++i) mu[i] += f.v[i];
        for (auto& m : mu) m /= n;
        cov.assign(size_t(d) * d, 0.0);
        for (const auto& f : s)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    cov[size_t(i) * d + j] += (f.v[i] - mu[i]) * (f.v[j] - mu[j]);
        const double denom = n > 1 ? n - 1 : 1;
        for (auto& c : cov) c /= denom;
    };

    std::vector<double> mu1, mu2, s1, s2;
    fit(a, mu1, s1);
    fit(b, mu2, s2);

    FDScore score;
    score.n_a = int(a.size());
    score.n_b = int(b.size());
    if (score.n_a < d + 1 || score.n_b < d + 1) {
        score.shrinkage_applied = true;
        for (int i = 0; i < d; ++i) {
            s1[size_t(i) * d + i] += 1e-6;
            s2[size_t(i) * d + i] += 1e-6;
        }
    }
    for (const auto* s : {&s1, &s2}) {
        std::vector<double> vals, vecs;
        sym_eig(*s, d, vals, vecs);
        for (double v : vals)
            if (v < -1e-8) throw VerifyError("patch_frechet: covariance not PSD after shrinkage");
    }

    double dist = 0.0;
    for (int i = 0; i < d; ++i) dist += (mu1[i] - mu2[i]) * (mu1[i] - mu2[i]);
    double tr = 0.0;
    for (int i = 0; i < d; ++i) tr += s1[size_t(i) * d + i] + s2[size_t(i) * d + i];
    dist += tr - 2.0 * trace_sqrt_product(s1, s2, d);
    score.value = std::max(0.0, dist);
    return score;
}

double mask_iou(const ImageRGB& generated, const MaskGray& mask, float threshold) {
    if (!(threshold > 0.f && threshold < 1.f)) throw ShapeError("mask_iou: threshold outside (0,1)");
    return mask_intersection_over_union(threshold_luminance(generated, threshold), mask);
}

double background_cleanliness(const ImageRGB& image, const MaskGray& mask, int dilation) {
    if (mask.h != image.h || mask.w != image.w)
        throw ShapeError("background_cleanliness: size mismatch");
    const MaskGray dilated = morph::dilate(mask, dilation);
    double acc = 0.0;
    int64_t n = 0;
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x)
            if (dilated.at(y, x) == 0.f) {
                acc += image.luminance(y, x);
                ++n;
            }
    if (n == 0) throw ShapeError("background_cleanliness: mask covers the whole image");
    return acc / double(n);
}

}  // namespace fontcraft::eval
