// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "fontcraft/image.hpp"

namespace fontcraft::eval {

constexpr int kFeatureDim = 17;

// Hand-crafted per-patch descriptor: mean RGB (3), upper-triangular RGB
// covariance (6), magnitude-weighted gradient-orientation histogram over
// [0, pi) in 8 bins (normalized to sum 1, or all zero for flat patches).
struct PatchFeature {
    std::array<double, kFeatureDim> v{};
};

PatchFeature patch_features(const ImageRGB& patch);

// n square patches whose centers lie on the mask contour, chosen uniformly at
// random with the seed; patch rectangles are clamped inside the image.
std::vector<ImageRGB> sample_edge_patches(const ImageRGB& image, const MaskGray& mask, int n,
                                          int size, uint64_t seed);

struct FDScore {
    double value = 0.0;
    int n_a = 0, n_b = 0;
    bool shrinkage_applied = false;
};

// Frechet distance between Gaussians fitted to the two feature sets:
// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}).
// Sets smaller than dim+1 get epsilon-shrinkage (1e-6 I) and are flagged.
FDScore patch_frechet(const std::vector<PatchFeature>& a, const std::vector<PatchFeature>& b);

// Readability proxy: IoU between the luminance-thresholded foreground and the
// glyph mask.
double mask_iou(const ImageRGB& generated, const MaskGray& mask, float threshold);

// Mean luminance outside dilate(mask, dilation); lower is cleaner.
double background_cleanliness(const ImageRGB& image, const MaskGray& mask, int dilation);

// ---- dense symmetric linear algebra (row-major d x d) --------------------
// Exposed so tests can cross-check the matrix square root by an independent
// iteration.

// Cyclic Jacobi eigensolver; returns eigenvalues, eigenvectors as columns.
void sym_eig(const std::vector<double>& m, int d, std::vector<double>& eigvals,
             std::vector<double>& eigvecs);

// Tr((s1 s2)^{1/2}) via the symmetric form sqrt(s1) s2 sqrt(s1).
double trace_sqrt_product(const std::vector<double>& s1, const std::vector<double>& s2, int d);

}  // namespace fontcraft::eval
