// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/common.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>

namespace splatcore {

/// Raw PNG pixels: 8- or 16-bit samples, 1 (gray) or 3 (RGB) channels.
struct PngPixels {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<std::uint16_t> samples; // row-major, interleaved
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE *f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path &path, const char *mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    require(f != nullptr, ErrorKind::io, "cannot open " + path.string());
    return f;
}

[[noreturn]] inline void png_error_fn(png_structp png, png_const_charp msg) {
    auto *buf = static_cast<std::string *>(png_get_error_ptr(png));
    if (buf) *buf = msg;
    png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

} // namespace detail

inline void write_png(const std::filesystem::path &path, const PngPixels &px) {
    require(px.channels == 1 || px.channels == 3, ErrorKind::invalid_argument, "png needs 1 or 3 channels");
    require(px.bit_depth == 8 || px.bit_depth == 16, ErrorKind::invalid_argument, "png needs 8 or 16 bits");
    require(px.width > 0 && px.height > 0 &&
                px.samples.size() == static_cast<std::size_t>(px.width) * px.height * px.channels,
            ErrorKind::dimension_mismatch, "png sample buffer does not match its size");

    const int bytes = px.bit_depth / 8;
    const std::size_t row_bytes = static_cast<std::size_t>(px.width) * px.channels * bytes;
    std::vector<png_byte> data(row_bytes * static_cast<std::size_t>(px.height));
    for (std::size_t i = 0; i < px.samples.size(); ++i) {
        if (bytes == 1) {
            data[i] = static_cast<png_byte>(px.samples[i]);
        } else {
            data[2 * i] = static_cast<png_byte>(px.samples[i] >> 8);
            data[2 * i + 1] = static_cast<png_byte>(px.samples[i] & 0xff);
        }
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(px.height));
    for (int y = 0; y < px.height; ++y) rows[static_cast<std::size_t>(y)] = data.data() + row_bytes * static_cast<std::size_t>(y);

    detail::FilePtr file = detail::open_file(path, "wb");
    std::string message;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, detail::png_error_fn,
                                              detail::png_warning_fn);
    require(png != nullptr, ErrorKind::io, "libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::io, "writing " + path.string() + " failed: " + message);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(px.width), static_cast<png_uint_32>(px.height), px.bit_depth,
                 px.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Reads gray or RGB PNGs without palette or alpha conversion surprises:
/// palettes expand to RGB, alpha channels are dropped.
inline PngPixels read_png(const std::filesystem::path &path) {
    detail::FilePtr file = detail::open_file(path, "rb");
    png_byte sig[8];
    require(std::fread(sig, 1, 8, file.get()) == 8 && png_sig_cmp(sig, 0, 8) == 0, ErrorKind::parse,
            path.string() + " is not a PNG file");
    std::string message;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, detail::png_error_fn,
                                             detail::png_warning_fn);
    require(png != nullptr, ErrorKind::io, "libpng initialization failed");
    png_infop info = png_create_info_struct(png);
    PngPixels px;
    std::vector<png_byte> data;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorKind::parse, "reading " + path.string() + " failed: " + message);
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    px.width = static_cast<int>(png_get_image_width(png, info));
    px.height = static_cast<int>(png_get_image_height(png, info));
    px.channels = png_get_channels(png, info);
    px.bit_depth = png_get_bit_depth(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    data.resize(row_bytes * static_cast<std::size_t>(px.height));
    rows.resize(static_cast<std::size_t>(px.height));
    for (int y = 0; y < px.height; ++y) rows[static_cast<std::size_t>(y)] = data.data() + row_bytes * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t n = static_cast<std::size_t>(px.width) * px.height * px.channels;
    px.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        px.samples[i] = px.bit_depth == 16 ? static_cast<std::uint16_t>((data[2 * i] << 8) | data[2 * i + 1])
                                           : data[i];
    }
    return px;
}

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Rounds a [0, 1] image to the 8-bit grid, matching a write/read cycle.
inline Image quantize8(const Image &img) {
    Image out = img;
    for (auto &px : out) {
        for (int c = 0; c < 3; ++c) px[c] = to_byte(px[c]) / 255.0;
    }
    return out;
}

inline void write_png_rgb(const std::filesystem::path &path, const Image &img) {
    PngPixels px{img.width(), img.height(), 3, 8, {}};
    px.samples.reserve(img.size() * 3);
    for (const auto &v : img) {
        for (int c = 0; c < 3; ++c) px.samples.push_back(to_byte(v[c]));
    }
    write_png(path, px);
}

inline Image read_png_rgb(const std::filesystem::path &path) {
    const PngPixels px = read_png(path);
    require(px.channels == 3 || px.channels == 1, ErrorKind::parse, path.string() + ": unsupported channel count");
    const double scale = px.bit_depth == 16 ? 65535.0 : 255.0;
    Image img(px.width, px.height);
    for (std::size_t p = 0; p < img.size(); ++p) {
        for (int c = 0; c < 3; ++c) {
            const std::size_t k = px.channels == 3 ? 3 * p + static_cast<std::size_t>(c) : p;
            img[p][c] = px.samples[k] / scale;
        }
    }
    return img;
}

/// 255 for set cells, 0 elsewhere.
inline void write_png_mask(const std::filesystem::path &path, const BoolGrid &mask) {
    PngPixels px{mask.width(), mask.height(), 1, 8, {}};
    for (auto v : mask) px.samples.push_back(v ? 255 : 0);
    write_png(path, px);
}

inline BoolGrid read_png_mask(const std::filesystem::path &path) {
    const PngPixels px = read_png(path);
    require(px.channels == 1, ErrorKind::parse, path.string() + ": mask must be single-channel");
    BoolGrid out(px.width, px.height, 0);
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = px.samples[p] != 0 ? 1 : 0;
    return out;
}

inline constexpr double kDepthUnit = 0.001; // meters per stored depth step

inline std::uint16_t depth_to_mm(double meters) {
    if (!(meters > 0) || !std::isfinite(meters)) return 0;
    return static_cast<std::uint16_t>(std::clamp<long>(std::lround(meters / kDepthUnit), 0, 65535));
}

/// Rounds depth to the stored millimeter grid, matching a write/read cycle.
inline DepthMap quantize_depth(const DepthMap &depth) {
    DepthMap out = depth;
    for (auto &d : out) d = depth_to_mm(d) * kDepthUnit;
    return out;
}

inline void write_png_depth(const std::filesystem::path &path, const DepthMap &depth) {
    PngPixels px{depth.width(), depth.height(), 1, 16, {}};
    px.samples.reserve(depth.size());
    for (double d : depth) px.samples.push_back(depth_to_mm(d));
    write_png(path, px);
}

inline DepthMap read_png_depth(const std::filesystem::path &path) {
    const PngPixels px = read_png(path);
    require(px.channels == 1 && px.bit_depth == 16, ErrorKind::parse,
            path.string() + ": depth must be 16-bit single-channel");
    DepthMap out(px.width, px.height, 0.0);
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = px.samples[p] * kDepthUnit;
    return out;
}

} // namespace splatcore
