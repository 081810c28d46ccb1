// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "fontcraft/image.hpp"

namespace fontcraft::morph {

// Binary morphology with a disc structuring element of the given radius
// (radius 0 is the identity). Inputs must be binary masks.
MaskGray dilate(const MaskGray& m, int radius);
MaskGray erode(const MaskGray& m, int radius);
MaskGray open(const MaskGray& m, int radius);
MaskGray close(const MaskGray& m, int radius);

// Separable Gaussian blur, zero-padded at the borders (outside = background).
MaskGray gaussian_blur(const MaskGray& m, double sigma);

// Boundary pixels: inside the mask with at least one 4-neighbor outside
// (image borders count as outside).
std::vector<std::pair<int, int>> contour_pixels(const MaskGray& m);

}  // namespace fontcraft::morph
