// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "fontcraft/image.hpp"

namespace fontcraft {

// 8-bit PNG I/O. Writers quantize with round(v * 255); fixed settings keep
// the emitted bytes reproducible for identical pixel content.
void write_png(const std::string& path, const ImageRGB& img);
void write_png(const std::string& path, const MaskGray& mask);

ImageRGB read_png_rgb(const std::string& path);
MaskGray read_png_gray(const std::string& path);

}  // namespace fontcraft
