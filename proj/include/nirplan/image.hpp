#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "nirplan/error.hpp"
#include "nirplan/point_cloud.hpp"

namespace nirplan {

/// Row-major scalar image with a per-pixel validity flag.
struct IntensityImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  IntensityImage() = default;
  IntensityImage(int w, int h, double fill = 0.0, bool is_valid = true)
      : width(w), height(h), values(std::size_t(w) * h, fill), valid(std::size_t(w) * h, is_valid ? 1 : 0) {
    if (w <= 0 || h <= 0) throw Error(ErrorCode::kInvalidArgument, "image dimensions must be positive");
  }

  std::size_t pixel_count() const { return values.size(); }
  std::size_t index(int x, int y) const { return std::size_t(y) * width + x; }
  double& at(int x, int y) { return values[index(x, y)]; }
  double at(int x, int y) const { return values[index(x, y)]; }
  bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }

  void validate() const {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::kInvalidArgument, "image dimensions must be positive");
    if (values.size() != pixel_count() || valid.size() != values.size() ||
        values.size() != std::size_t(width) * height) {
      throw Error(ErrorCode::kDimensionMismatch, "image buffers do not match its dimensions");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (valid[i] && !(std::isfinite(values[i]) && values[i] >= 0.0)) {
        throw Error(ErrorCode::kInvalidArgument, "valid pixels must be finite and non-negative");
      }
    }
  }
};

/// Per-pixel tissue class (background / healthy / tumor).
struct SegmentationMask {
  int width = 0;
  int height = 0;
  std::vector<Label> classes;

  SegmentationMask() = default;
  SegmentationMask(int w, int h, Label fill = Label::kBackground)
      : width(w), height(h), classes(std::size_t(w) * h, fill) {}

  std::size_t index(int x, int y) const { return std::size_t(y) * width + x; }
  Label at(int x, int y) const { return classes[index(x, y)]; }
  Label& at(int x, int y) { return classes[index(x, y)]; }

  std::size_t count(Label l) const {
    std::size_t n = 0;
    for (auto c : classes) n += (c == l);
    return n;
  }

  bool operator==(const SegmentationMask&) const = default;
};

}  // namespace nirplan
