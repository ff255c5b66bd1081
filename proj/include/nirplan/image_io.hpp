#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "nirplan/error.hpp"
#include "nirplan/image.hpp"

namespace nirplan::io {

namespace detail {

struct GrayRaster {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::vector<std::uint16_t> samples;
};

inline std::uint16_t quantize(double v, double scale) {
  const double q = std::round(v * scale);
  return static_cast<std::uint16_t>(std::clamp(q, 0.0, 65535.0));
}

inline void write_pgm_raster(const std::filesystem::path& path, const GrayRaster& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << "P2\n" << r.width << ' ' << r.height << '\n' << r.maxval << '\n';
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      if (x) out << ' ';
      out << r.samples[std::size_t(y) * r.width + x];
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

// Header tokens may be separated by arbitrary whitespace and '#' comments.
inline std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

inline GrayRaster read_pgm_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  GrayRaster r;
  const std::string magic = next_token(in);
  if (magic != "P2" && magic != "P5") throw Error(ErrorCode::kParse, path.string() + ": not a PGM file");
  try {
    r.width = std::stoi(next_token(in));
    r.height = std::stoi(next_token(in));
    r.maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParse, path.string() + ": malformed PGM header");
  }
  if (r.width <= 0 || r.height <= 0 || r.maxval <= 0 || r.maxval > 65535) {
    throw Error(ErrorCode::kParse, path.string() + ": invalid PGM dimensions or maxval");
  }
  const std::size_t n = std::size_t(r.width) * r.height;
  r.samples.resize(n);
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) {
      const std::string tok = next_token(in);
      if (tok.empty()) throw Error(ErrorCode::kParse, path.string() + ": truncated PGM data");
      r.samples[i] = static_cast<std::uint16_t>(std::stoi(tok));
    }
  } else {
    const bool wide = r.maxval > 255;
    for (std::size_t i = 0; i < n; ++i) {
      int hi = in.get();
      if (hi == EOF) throw Error(ErrorCode::kParse, path.string() + ": truncated PGM data");
      if (wide) {
        int lo = in.get();
        if (lo == EOF) throw Error(ErrorCode::kParse, path.string() + ": truncated PGM data");
        r.samples[i] = static_cast<std::uint16_t>((hi << 8) | lo);
      } else {
        r.samples[i] = static_cast<std::uint16_t>(hi);
      }
    }
  }
  return r;
}

}  // namespace detail

/// Writes an intensity image as ASCII PGM, storing round(value * scale) in 16 bits.
/// Invalid pixels are written as 0.
inline void write_pgm(const std::filesystem::path& path, const IntensityImage& img, double scale = 1.0) {
  detail::GrayRaster r{img.width, img.height, 65535, {}};
  r.samples.resize(img.pixel_count());
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    r.samples[i] = img.valid[i] ? detail::quantize(img.values[i], scale) : 0;
  }
  detail::write_pgm_raster(path, r);
}

inline IntensityImage read_pgm(const std::filesystem::path& path, double scale = 1.0) {
  const auto r = detail::read_pgm_raster(path);
  IntensityImage img(r.width, r.height);
  for (std::size_t i = 0; i < r.samples.size(); ++i) img.values[i] = r.samples[i] / scale;
  return img;
}

/// Masks use class values 0 (background), 1 (healthy), 2 (tumor).
inline void write_mask_pgm(const std::filesystem::path& path, const SegmentationMask& mask) {
  detail::GrayRaster r{mask.width, mask.height, 255, {}};
  r.samples.reserve(mask.classes.size());
  for (auto c : mask.classes) r.samples.push_back(static_cast<std::uint16_t>(c));
  detail::write_pgm_raster(path, r);
}

inline SegmentationMask read_mask_pgm(const std::filesystem::path& path) {
  const auto r = detail::read_pgm_raster(path);
  SegmentationMask mask(r.width, r.height);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    if (r.samples[i] > 2) {
      throw Error(ErrorCode::kParse, path.string() + ": mask value " + std::to_string(r.samples[i]) +
                                         " is not a class in {0,1,2}");
    }
    mask.classes[i] = static_cast<Label>(r.samples[i]);
  }
  return mask;
}

/// 16-bit grayscale PNG, same quantization as write_pgm.
inline void write_png16(const std::filesystem::path& path, const IntensityImage& img, double scale = 1.0) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIo, "libpng initialization failed");
  }
  std::vector<png_byte> row(std::size_t(img.width) * 2);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIo, "libpng write failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const std::size_t i = img.index(x, y);
      const std::uint16_t v = img.valid[i] ? detail::quantize(img.values[i], scale) : 0;
      row[2 * x] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
      row[2 * x + 1] = static_cast<png_byte>(v & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline IntensityImage read_png16(const std::filesystem::path& path, double scale = 1.0) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "rb"), &std::fclose);
  if (!fp) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kIo, "libpng initialization failed");
  }
  IntensityImage img;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kParse, "libpng read failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY || png_get_bit_depth(png, info) != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kParse, path.string() + ": expected 16-bit grayscale PNG");
  }
  img = IntensityImage(w, h);
  row.resize(std::size_t(w) * 2);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) img.at(x, y) = ((row[2 * x] << 8) | row[2 * x + 1]) / scale;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace nirplan::io
