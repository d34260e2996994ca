#pragma once

// 8-bit raster codecs: PNG through libpng, binary PGM/PPM natively. Decoded
// samples are normalised to [0, 1] (value / 255).

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "slsmil/error.hpp"
#include "slsmil/image.hpp"

namespace slsmil {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline ColorImage from_interleaved(const std::vector<std::uint8_t>& data, int w, int h, int c) {
  ColorImage img(w, h, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k)
        img.channels[k].at(x, y) = data[(static_cast<std::size_t>(y) * w + x) * c + k] / 255.0;
  return img;
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline ColorImage read_png(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw Error(ErrorCode::IoFailure, "not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoFailure, "libpng initialisation failed");
  }
  std::vector<std::uint8_t> data;
  std::vector<png_bytep> rows;
  int w = 0, h = 0, channels = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::IoFailure, "corrupt PNG: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  data.resize(stride * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = data.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (channels != 1 && channels != 3)
    throw Error(ErrorCode::IoFailure, "unsupported PNG channel layout: " + path.string());
  return from_interleaved(data, w, h, channels);
}

inline ColorImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string magic;
  in >> magic;
  const int c = magic == "P5" ? 1 : magic == "P6" ? 3 : 0;
  if (c == 0) throw Error(ErrorCode::IoFailure, "unsupported PNM type: " + path.string());
  auto next_int = [&]() {
    int v = -1;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    in >> v;
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255)
    throw Error(ErrorCode::IoFailure, "unsupported PNM header: " + path.string());
  in.get();
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h * c);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!in) throw Error(ErrorCode::IoFailure, "truncated PNM: " + path.string());
  return from_interleaved(data, w, h, c);
}

}  // namespace detail

inline bool is_raster_path(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".png" || ext == ".PNG" || ext == ".pgm" || ext == ".ppm";
}

/// Decode an 8-bit PNG / PGM / PPM. Grayscale yields one channel, colour three.
inline ColorImage read_image(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".pgm" || ext == ".ppm") return detail::read_pnm(path);
  return detail::read_png(path);
}

/// Encode as 8-bit PNG (1 or 3 channels). Output bytes depend only on pixels.
inline void write_png(const std::filesystem::path& path, const ColorImage& img) {
  const int c = img.channel_count();
  if (c != 1 && c != 3) throw Error(ErrorCode::InvalidArgument, "PNG output needs 1 or 3 channels");
  const int w = img.width(), h = img.height();
  std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h * c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k)
        data[(static_cast<std::size_t>(y) * w + x) * c + k] = detail::to_byte(img.channels[k].at(x, y));

  detail::FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoFailure, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoFailure, "PNG encoding failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    png_write_row(png, data.data() + static_cast<std::size_t>(y) * w * c);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

/// Round every sample to the nearest 8-bit level, as a PNG round trip would.
inline void quantize_8bit(ColorImage& img) {
  for (auto& ch : img.channels)
    for (double& v : ch.samples) v = detail::to_byte(v) / 255.0;
}

}  // namespace slsmil
