// Copyright Contributors to the gaussadv Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gaussadv/png.hpp"

#include "gaussadv/error.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace gaussadv {

namespace {

struct FileCloser {
    void operator()(std::FILE *f) const {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(quantize8(v) * 255.0 + 0.5);
}

void write_rows(const std::string &path, int width, int height, int color_type,
                const std::vector<std::uint8_t> &data, int channels) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp)
        throw Error(ErrorKind::IoFailure, "cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::IoFailure, "libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::IoFailure, "libpng failed writing " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    // Fixed compression settings keep output bytes reproducible.
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(data.data() + static_cast<std::size_t>(y) * width * channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace

void write_png(const std::string &path, const RgbImage &image) {
    const int w = image.width(), h = image.height();
    std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                data[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(image[c](y, x));
    write_rows(path, w, h, PNG_COLOR_TYPE_RGB, data, 3);
}

void write_png(const std::string &path, const Plane &plane) {
    const int w = static_cast<int>(plane.cols()), h = static_cast<int>(plane.rows());
    std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            data[static_cast<std::size_t>(y) * w + x] = to_byte(plane(y, x));
    write_rows(path, w, h, PNG_COLOR_TYPE_GRAY, data, 1);
}

RgbImage read_png(const std::string &path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp)
        throw Error(ErrorKind::IoFailure, "cannot open " + path);
    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw Error(ErrorKind::UnsupportedFormat, path + " is not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorKind::IoFailure, "libpng initialization failed");
    }
    std::vector<png_byte> data;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorKind::IoFailure, "libpng failed reading " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA)
        png_set_strip_alpha(png);
    if (depth == 16)
        png_set_strip_16(png);
    png_read_update_info(png, info);
    const auto w = static_cast<int>(png_get_image_width(png, info));
    const auto h = static_cast<int>(png_get_image_height(png, info));
    const std::size_t stride = png_get_rowbytes(png, info);
    data.resize(stride * static_cast<std::size_t>(h));
    rows.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] = data.data() + stride * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    RgbImage img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img[c](y, x) = rows[static_cast<std::size_t>(y)][x * 3 + c] / 255.0;
    return img;
}

void write_pfm(const std::string &path, const Plane &plane) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::IoFailure, "cannot open " + path + " for writing");
    out << "Pf\n" << plane.cols() << ' ' << plane.rows() << "\n-1.0\n";
    for (Eigen::Index y = plane.rows() - 1; y >= 0; --y)
        for (Eigen::Index x = 0; x < plane.cols(); ++x) {
            const auto v = static_cast<float>(plane(y, x));
            out.write(reinterpret_cast<const char *>(&v), sizeof v);
        }
    if (!out)
        throw Error(ErrorKind::IoFailure, "failed writing " + path);
}

Plane read_pfm(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::IoFailure, "cannot open " + path);
    std::string magic;
    int w = 0, h = 0;
    double scale = 0;
    in >> magic >> w >> h >> scale;
    in.get();
    if (magic != "Pf" || w <= 0 || h <= 0 || scale >= 0)
        throw Error(ErrorKind::UnsupportedFormat, path + ": expected little-endian grey PFM");
    Plane p(h, w);
    for (int y = h - 1; y >= 0; --y)
        for (int x = 0; x < w; ++x) {
            float v = 0;
            in.read(reinterpret_cast<char *>(&v), sizeof v);
            p(y, x) = v;
        }
    if (!in)
        throw Error(ErrorKind::IoFailure, path + ": truncated PFM");
    return p;
}

} // namespace gaussadv
