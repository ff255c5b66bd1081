#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nirplan/error.hpp"
#include "nirplan/geometry.hpp"

namespace nirplan {

/// Tissue classes. Numeric values are the on-disk encoding (PLY class
/// properties and PGM masks).
enum class Label : std::uint8_t {
  kBackground = 0,
  kHealthy = 1,
  kTumor = 2,
  kMargin = 3,
};

inline std::string_view to_string(Label l) {
  switch (l) {
    case Label::kBackground: return "background";
    case Label::kHealthy: return "healthy";
    case Label::kTumor: return "tumor";
    case Label::kMargin: return "margin";
  }
  return "unknown";
}

inline Label label_from_int(int v) {
  if (v < 0 || v > 3) throw Error(ErrorCode::kParse, "class value out of range: " + std::to_string(v));
  return static_cast<Label>(v);
}

struct LabeledPointCloud {
  std::string frame = "world";
  std::vector<Point3> points;
  std::vector<Label> labels;
  // Renderer ground truth; evaluation only, never read by the planner.
  std::optional<std::vector<Label>> truth;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void validate() const {
    if (labels.size() != points.size()) {
      throw Error(ErrorCode::kAlignment, "label count " + std::to_string(labels.size()) +
                                             " differs from point count " + std::to_string(points.size()));
    }
    if (truth && truth->size() != points.size()) {
      throw Error(ErrorCode::kAlignment, "ground-truth label count differs from point count");
    }
    for (const auto& p : points) {
      if (!is_finite(p)) throw Error(ErrorCode::kInvalidArgument, "non-finite point in cloud");
    }
  }

  std::vector<Point3> points_with(Label l) const {
    std::vector<Point3> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (labels[i] == l) out.push_back(points[i]);
    }
    return out;
  }

  std::size_t count(Label l) const {
    std::size_t n = 0;
    for (auto x : labels) n += (x == l);
    return n;
  }

  LabeledPointCloud transformed(const RigidTransform& t, std::string new_frame) const {
    LabeledPointCloud out = *this;
    out.frame = std::move(new_frame);
    for (auto& p : out.points) p = t.apply(p);
    return out;
  }
};

}  // namespace nirplan
