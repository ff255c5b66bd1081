#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "nirplan/calibration.hpp"
#include "nirplan/error.hpp"
#include "nirplan/image.hpp"
#include "nirplan/point_cloud.hpp"

namespace nirplan {

struct SegmentationParams {
  // Pixels at or above this value are healthy tissue. Derived from the
  // histogram when unset.
  std::optional<double> healthy_threshold;
  // Enclosed dark regions smaller than this many pixels are treated as
  // healthy-tissue speckle rather than tumor.
  std::size_t min_tumor_area = 1;
  int histogram_bins = 256;
};

/// Two-class between-class-variance maximizing threshold over valid pixels.
/// Returns nullopt when the valid pixels carry a single intensity.
inline std::optional<double> otsu_threshold(const IntensityImage& img, int bins = 256) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (!img.valid[i]) continue;
    lo = std::min(lo, img.values[i]);
    hi = std::max(hi, img.values[i]);
  }
  if (!(hi > lo)) return std::nullopt;
  std::vector<double> hist(bins, 0.0);
  const double width = (hi - lo) / bins;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (!img.valid[i]) continue;
    const int b = std::min(bins - 1, static_cast<int>((img.values[i] - lo) / width));
    hist[b] += 1.0;
  }
  double total = 0.0, total_sum = 0.0;
  for (int b = 0; b < bins; ++b) {
    total += hist[b];
    total_sum += hist[b] * (b + 0.5);
  }
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_split = 1;
  for (int split = 1; split < bins; ++split) {  // class 0 = bins [0, split)
    w0 += hist[split - 1];
    sum0 += hist[split - 1] * (split - 0.5);
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (total_sum - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_split = split;
    }
  }
  return lo + best_split * width;
}

/// Threshold plus enclosure rule: bright pixels are healthy; dark pixels that
/// cannot reach the image border through other dark pixels (4-connected) are
/// tumor; every other pixel is background.
inline SegmentationMask segment_nir(const IntensityImage& img, const SegmentationParams& params = {}) {
  img.validate();
  double threshold = 0.0;
  if (params.healthy_threshold) {
    threshold = *params.healthy_threshold;
  } else {
    auto t = otsu_threshold(img, params.histogram_bins);
    if (!t) throw Error(ErrorCode::kNoKidneyFound, "image is uniform; nothing to separate from background");
    threshold = *t;
  }
  const int w = img.width, h = img.height;
  std::vector<std::uint8_t> bright(img.pixel_count(), 0);
  std::size_t n_bright = 0;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    bright[i] = img.valid[i] && img.values[i] >= threshold;
    n_bright += bright[i];
  }
  if (n_bright == 0) {
    throw Error(ErrorCode::kNoKidneyFound, "no pixel reaches the healthy-tissue threshold " + std::to_string(threshold));
  }

  SegmentationMask mask(w, h, Label::kBackground);
  std::vector<std::uint8_t> seen(img.pixel_count(), 0);
  std::queue<std::size_t> todo;
  auto seed = [&](int x, int y) {
    const std::size_t i = std::size_t(y) * w + x;
    if (!bright[i] && !seen[i]) {
      seen[i] = 1;
      todo.push(i);
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  auto flood = [&](std::vector<std::size_t>* component) {
    while (!todo.empty()) {
      const std::size_t i = todo.front();
      todo.pop();
      if (component) component->push_back(i);
      const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
      if (x > 0) seed(x - 1, y);
      if (x + 1 < w) seed(x + 1, y);
      if (y > 0) seed(x, y - 1);
      if (y + 1 < h) seed(x, y + 1);
    }
  };
  flood(nullptr);  // everything reached from the border stays background

  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (bright[i]) mask.classes[i] = Label::kHealthy;
  }
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (bright[i] || seen[i]) continue;
    std::vector<std::size_t> component;
    seen[i] = 1;
    todo.push(i);
    flood(&component);
    const Label l = component.size() >= params.min_tumor_area ? Label::kTumor : Label::kHealthy;
    for (auto j : component) mask.classes[j] = l;
  }
  return mask;
}

/// Each point takes the class of the pixel containing its projection
/// (floor of the continuous coordinate). Points outside the image or behind
/// the camera become background.
inline LabeledPointCloud label_cloud(const LabeledPointCloud& cloud, const std::vector<PointProjection>& projections,
                                     const SegmentationMask& mask) {
  if (projections.size() != cloud.size()) {
    throw Error(ErrorCode::kAlignment, "projection count " + std::to_string(projections.size()) +
                                           " differs from cloud size " + std::to_string(cloud.size()));
  }
  LabeledPointCloud out = cloud;
  out.labels.assign(cloud.size(), Label::kBackground);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& pp = projections[i];
    if (pp.status != ProjectionStatus::kInImage) continue;
    const double fx = std::floor(pp.pixel.u), fy = std::floor(pp.pixel.v);
    if (fx < 0 || fy < 0 || fx >= mask.width || fy >= mask.height) continue;
    out.labels[i] = mask.at(static_cast<int>(fx), static_cast<int>(fy));
  }
  return out;
}

}  // namespace nirplan
