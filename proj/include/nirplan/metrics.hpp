#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <tuple>
#include <vector>

#include "nirplan/error.hpp"
#include "nirplan/geometry.hpp"
#include "nirplan/image.hpp"
#include "nirplan/point_cloud.hpp"
#include "nirplan/spatial_index.hpp"

namespace nirplan {

// ---- Hausdorff -------------------------------------------------------------

/// max over a in A of the distance from a to its nearest neighbor in B.
inline double directed_hausdorff(std::span<const Point3> a, std::span<const Point3> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::kEmptyInput, "Hausdorff distance needs two non-empty sets");
  const SpatialIndex index(b);
  double worst = 0.0;
  for (const auto& p : a) worst = std::max(worst, index.nearest(p).distance);
  return worst;
}

inline double hausdorff(std::span<const Point3> a, std::span<const Point3> b) {
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

// ---- SBR -------------------------------------------------------------------

/// Ratio of mean target intensity to mean background intensity; regions are
/// pixel indices into `img`.
inline double sbr(const IntensityImage& img, std::span<const std::size_t> target,
                  std::span<const std::size_t> background) {
  if (target.empty() || background.empty()) throw Error(ErrorCode::kEmptyInput, "SBR regions must be non-empty");
  std::vector<std::uint8_t> in_target(img.pixel_count(), 0);
  double sum_t = 0.0, sum_b = 0.0;
  for (auto i : target) {
    if (i >= img.pixel_count()) throw Error(ErrorCode::kInvalidArgument, "SBR target pixel out of range");
    in_target[i] = 1;
    sum_t += img.values[i];
  }
  for (auto i : background) {
    if (i >= img.pixel_count()) throw Error(ErrorCode::kInvalidArgument, "SBR background pixel out of range");
    if (in_target[i]) throw Error(ErrorCode::kOverlappingRegions, "target and background regions overlap");
    sum_b += img.values[i];
  }
  const double mean_b = sum_b / static_cast<double>(background.size());
  if (!(mean_b > 0)) throw Error(ErrorCode::kUndefinedSbr, "background mean intensity is zero");
  return (sum_t / static_cast<double>(target.size())) / mean_b;
}

inline std::vector<std::size_t> pixels_of(const SegmentationMask& mask, Label l) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.classes.size(); ++i) {
    if (mask.classes[i] == l) out.push_back(i);
  }
  return out;
}

// ---- Dice ------------------------------------------------------------------

/// 2|X n Y| / (|X| + |Y|); both empty counts as perfect agreement.
inline double dice(std::size_t intersection, std::size_t size_x, std::size_t size_y) {
  if (size_x + size_y == 0) return 1.0;
  return 2.0 * static_cast<double>(intersection) / static_cast<double>(size_x + size_y);
}

/// Per-class Dice for background / healthy / tumor plus the mean weighted by
/// reference class size.
struct DiceScores {
  std::array<double, 3> per_class{1.0, 1.0, 1.0};
  std::array<std::size_t, 3> reference_count{0, 0, 0};
  double weighted_mean = 1.0;

  double of(Label l) const { return per_class[static_cast<std::size_t>(l)]; }
};

namespace detail {
inline void finish_weighted(DiceScores& s) {
  const double total = static_cast<double>(s.reference_count[0] + s.reference_count[1] + s.reference_count[2]);
  if (total == 0) {
    s.weighted_mean = 1.0;
    return;
  }
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) acc += s.per_class[c] * static_cast<double>(s.reference_count[c]);
  s.weighted_mean = acc / total;
}
}  // namespace detail

inline DiceScores dsc_2d(const SegmentationMask& predicted, const SegmentationMask& reference) {
  if (predicted.width != reference.width || predicted.height != reference.height) {
    throw Error(ErrorCode::kDimensionMismatch, "mask sizes differ");
  }
  std::array<std::size_t, 3> inter{}, px{}, py{};
  for (std::size_t i = 0; i < predicted.classes.size(); ++i) {
    const auto a = static_cast<std::size_t>(predicted.classes[i]);
    const auto b = static_cast<std::size_t>(reference.classes[i]);
    if (a > 2 || b > 2) throw Error(ErrorCode::kInvalidArgument, "mask holds a non-image class");
    ++px[a];
    ++py[b];
    if (a == b) ++inter[a];
  }
  DiceScores s;
  for (int c = 0; c < 3; ++c) {
    s.per_class[c] = dice(inter[c], px[c], py[c]);
    s.reference_count[c] = py[c];
  }
  detail::finish_weighted(s);
  return s;
}

/// Point-set Dice matching: one-to-one pairs closer than `threshold`
/// (strict). Pairs are first taken greedily in order of increasing distance,
/// then augmenting paths raise the count to a maximum matching.
inline std::size_t matched_pairs(std::span<const Point3> x, std::span<const Point3> y, double threshold) {
  if (!(threshold > 0)) throw Error(ErrorCode::kInvalidArgument, "matching threshold must be positive");
  if (x.empty() || y.empty()) return 0;
  const SpatialIndex index(y);
  std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
  std::vector<std::vector<std::size_t>> adj(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (auto j : index.radius(x[i], threshold)) {
      const double d = (x[i] - y[j]).norm();
      if (d < threshold) {
        candidates.emplace_back(d, i, j);
        adj[i].push_back(j);
      }
    }
  }
  std::sort(candidates.begin(), candidates.end());
  constexpr std::size_t kFree = static_cast<std::size_t>(-1);
  std::vector<std::size_t> mate_x(x.size(), kFree), mate_y(y.size(), kFree);
  std::size_t matches = 0;
  for (const auto& [d, i, j] : candidates) {
    if (mate_x[i] != kFree || mate_y[j] != kFree) continue;
    mate_x[i] = j;
    mate_y[j] = i;
    ++matches;
  }

  std::vector<std::size_t> stamp(y.size(), 0);
  std::size_t round = 0;
  // Iterative DFS for an augmenting path from x-vertex `root`.
  auto augment = [&](std::size_t root) {
    struct Frame {
      std::size_t i, next;
    };
    std::vector<Frame> stack{{root, 0}};
    std::vector<std::size_t> via;  // y vertex chosen at each level
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next == adj[f.i].size()) {
        stack.pop_back();
        if (!via.empty()) via.pop_back();
        continue;
      }
      const std::size_t j = adj[f.i][f.next++];
      if (stamp[j] == round) continue;
      stamp[j] = round;
      via.push_back(j);
      if (mate_y[j] == kFree) {
        for (std::size_t k = 0; k < via.size(); ++k) {
          mate_x[stack[k].i] = via[k];
          mate_y[via[k]] = stack[k].i;
        }
        return true;
      }
      stack.push_back({mate_y[j], 0});
    }
    return false;
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mate_x[i] != kFree || adj[i].empty()) continue;
    ++round;
    if (augment(i)) ++matches;
  }
  return matches;
}

inline double dsc_3d(std::span<const Point3> x, std::span<const Point3> y, double threshold = 0.1) {
  return dice(matched_pairs(x, y, threshold), x.size(), y.size());
}

/// Class-wise point-set Dice between predicted and reference labelings of
/// point clouds. Margin labels count as healthy tissue.
inline DiceScores dsc_3d_by_class(std::span<const Point3> predicted_points, std::span<const Label> predicted_labels,
                                  std::span<const Point3> reference_points, std::span<const Label> reference_labels,
                                  double threshold = 0.1) {
  if (predicted_points.size() != predicted_labels.size() || reference_points.size() != reference_labels.size()) {
    throw Error(ErrorCode::kAlignment, "labels and points differ in length");
  }
  auto select = [](std::span<const Point3> pts, std::span<const Label> labels, Label c) {
    std::vector<Point3> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Label l = labels[i] == Label::kMargin ? Label::kHealthy : labels[i];
      if (l == c) out.push_back(pts[i]);
    }
    return out;
  };
  DiceScores s;
  for (int c = 0; c < 3; ++c) {
    const auto px = select(predicted_points, predicted_labels, static_cast<Label>(c));
    const auto py = select(reference_points, reference_labels, static_cast<Label>(c));
    s.per_class[c] = dsc_3d(px, py, threshold);
    s.reference_count[c] = py.size();
  }
  detail::finish_weighted(s);
  return s;
}

// ---- Margin error ------------------------------------------------------------

/// Signed error per incision point: (distance to the closest tumor point +
/// tool offset) - desired margin. Positive means farther from the tumor than
/// desired.
struct MarginErrorReport {
  std::vector<double> errors;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  double mean_abs = 0.0;
  double margin = 5.0;
  double tool_offset = 0.5;

  static MarginErrorReport from_errors(std::vector<double> errors, double margin, double tool_offset) {
    MarginErrorReport r;
    r.errors = std::move(errors);
    r.margin = margin;
    r.tool_offset = tool_offset;
    const double n = static_cast<double>(r.errors.size());
    if (r.errors.empty()) return r;
    double s = 0.0, sa = 0.0;
    for (double e : r.errors) {
      s += e;
      sa += std::abs(e);
    }
    r.mean = s / n;
    r.mean_abs = sa / n;
    double ss = 0.0;
    for (double e : r.errors) ss += (e - r.mean) * (e - r.mean);
    r.stddev = std::sqrt(ss / n);
    return r;
  }
};

inline MarginErrorReport margin_error(std::span<const Point3> incision, std::span<const Point3> tumor,
                                      double margin = 5.0, double tool_offset = 0.5) {
  if (incision.empty() || tumor.empty()) throw Error(ErrorCode::kEmptyInput, "margin error needs incision and tumor points");
  const SpatialIndex index(tumor);
  std::vector<double> errors;
  errors.reserve(incision.size());
  for (const auto& p : incision) errors.push_back(index.nearest(p).distance + tool_offset - margin);
  return MarginErrorReport::from_errors(std::move(errors), margin, tool_offset);
}

}  // namespace nirplan
