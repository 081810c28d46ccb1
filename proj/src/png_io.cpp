// SPDX-License-Identifier: Apache-2.0
#include "fontcraft/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace fontcraft {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

uint8_t quant8(float v) { return uint8_t(std::lround(std::min(1.f, std::max(0.f, v)) * 255.f)); }

void write_png_impl(const std::string& path, int h, int w, int channels,
                    const std::vector<uint8_t>& bytes) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw IoError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng write failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, w, h, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = const_cast<uint8_t*>(&bytes[size_t(y) * w * channels]);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct Decoded {
    int h, w, channels;
    std::vector<uint8_t> bytes;
};

Decoded read_png_impl(const std::string& path, bool want_gray) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open for read: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw IoError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng read failed: " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    png_set_strip_alpha(png);
    if (want_gray) {
        if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    } else {
        if (!(color & PNG_COLOR_MASK_COLOR)) png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);

    Decoded d;
    d.h = int(png_get_image_height(png, info));
    d.w = int(png_get_image_width(png, info));
    d.channels = want_gray ? 1 : 3;
    d.bytes.resize(size_t(d.h) * d.w * d.channels);
    std::vector<png_bytep> rows(d.h);
    for (int y = 0; y < d.h; ++y) rows[y] = &d.bytes[size_t(y) * d.w * d.channels];
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return d;
}

}  // namespace

void write_png(const std::string& path, const ImageRGB& img) {
    std::vector<uint8_t> bytes(img.v.size());
    for (size_t i = 0; i < img.v.size(); ++i) bytes[i] = quant8(img.v[i]);
    write_png_impl(path, img.h, img.w, 3, bytes);
}

void write_png(const std::string& path, const MaskGray& mask) {
    std::vector<uint8_t> bytes(mask.v.size());
    for (size_t i = 0; i < mask.v.size(); ++i) bytes[i] = quant8(mask.v[i]);
    write_png_impl(path, mask.h, mask.w, 1, bytes);
}

ImageRGB read_png_rgb(const std::string& path) {
    Decoded d = read_png_impl(path, false);
    ImageRGB img(d.h, d.w);
    for (size_t i = 0; i < img.v.size(); ++i) img.v[i] = d.bytes[i] / 255.f;
    return img;
}

MaskGray read_png_gray(const std::string& path) {
    Decoded d = read_png_impl(path, true);
    MaskGray m(d.h, d.w);
    for (size_t i = 0; i < m.v.size(); ++i) m.v[i] = d.bytes[i] / 255.f;
    return m;
}

}  // namespace fontcraft
