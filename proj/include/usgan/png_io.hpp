#pragma once

// 8-bit grayscale PNG encode/decode on top of libpng. Intensities are
// quantised as round(v * 255) on the way out and v / 255 on the way in.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "usgan/image.hpp"

namespace usgan {

using Bytes = std::vector<std::uint8_t>;

inline std::uint8_t to_u8(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline Grid<std::uint8_t> quantize(const Image& img) {
  Grid<std::uint8_t> out(img.rows(), img.cols());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = to_u8(img[i]);
  return out;
}

inline Image dequantize(const Grid<std::uint8_t>& g) {
  Image out(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = static_cast<float>(g[i]) / 255.0f;
  return out;
}

namespace detail {

struct PngReadCursor {
  std::span<const std::uint8_t> data;
  std::size_t pos = 0;
};

inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}
inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

inline Bytes encode_png_u8(const Grid<std::uint8_t>& g) {
  if (g.rows() <= 0 || g.cols() <= 0) throw ArgumentError("encode_png: empty image");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  Bytes out;
  std::vector<png_bytep> rows(static_cast<std::size_t>(g.rows()));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed: " + err);
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        auto* buf = static_cast<Bytes*>(png_get_io_ptr(p));
        buf->insert(buf->end(), data, data + len);
      },
      [](png_structp) {});
  png_set_IHDR(png, info, static_cast<png_uint_32>(g.cols()), static_cast<png_uint_32>(g.rows()), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  for (int r = 0; r < g.rows(); ++r)
    rows[static_cast<std::size_t>(r)] = const_cast<png_bytep>(&g.at(r, 0));
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline Bytes encode_png(const Image& img) { return encode_png_u8(quantize(img)); }

/// Decodes any PNG to 8-bit gray (colour is converted, alpha stripped,
/// 16-bit reduced).
inline Grid<std::uint8_t> decode_png_u8(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw IoError("not a PNG stream");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  detail::PngReadCursor cursor{bytes, 0};
  Grid<std::uint8_t> out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG decode failed: " + err);
  }
  png_set_read_fn(png, &cursor, [](png_structp p, png_bytep data, png_size_t len) {
    auto* c = static_cast<detail::PngReadCursor*>(png_get_io_ptr(p));
    if (c->pos + len > c->data.size()) png_error(p, "truncated PNG stream");
    std::memcpy(data, c->data.data() + c->pos, len);
    c->pos += len;
  });
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(w)) png_error(png, "unexpected row layout after gray conversion");
  out = Grid<std::uint8_t>(h, w);
  rows.resize(static_cast<std::size_t>(h));
  for (int r = 0; r < h; ++r) rows[static_cast<std::size_t>(r)] = &out.at(r, 0);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

inline Image decode_png(std::span<const std::uint8_t> bytes) { return dequantize(decode_png_u8(bytes)); }

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

inline Image read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void write_png(const std::filesystem::path& path, const Image& img) { write_file(path, encode_png(img)); }

}  // namespace usgan
