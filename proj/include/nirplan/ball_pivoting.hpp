#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Eigenvalues>

#include "nirplan/error.hpp"
#include "nirplan/geometry.hpp"
#include "nirplan/spatial_index.hpp"

namespace nirplan {

/// Median distance from each point to its nearest other point.
inline double median_spacing(std::span<const Point3> points) {
  if (points.size() < 2) throw Error(ErrorCode::kEmptyInput, "spacing needs at least two points");
  const SpatialIndex index(points);
  std::vector<double> d;
  d.reserve(points.size());
  for (const auto& p : points) d.push_back(index.k_nearest(p, 2).back().distance);
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return d[d.size() / 2];
}

inline double mean_spacing(std::span<const Point3> points) {
  if (points.size() < 2) throw Error(ErrorCode::kEmptyInput, "spacing needs at least two points");
  const SpatialIndex index(points);
  double s = 0.0;
  for (const auto& p : points) s += index.k_nearest(p, 2).back().distance;
  return s / static_cast<double>(points.size());
}

/// PCA normals over k nearest neighbors, oriented toward `viewpoint` when
/// given, otherwise away from the centroid of the cloud.
inline std::vector<Vector3> estimate_normals(std::span<const Point3> points, std::size_t k = 12,
                                             const std::optional<Point3>& viewpoint = std::nullopt) {
  const SpatialIndex index(points);
  Point3 centroid = Point3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(std::max<std::size_t>(1, points.size()));
  std::vector<Vector3> normals(points.size(), Vector3::UnitZ());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto nn = index.k_nearest(points[i], k);
    Point3 mean = Point3::Zero();
    for (const auto& n : nn) mean += points[n.index];
    mean /= static_cast<double>(nn.size());
    Matrix3 cov = Matrix3::Zero();
    for (const auto& n : nn) {
      const Vector3 d = points[n.index] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Matrix3> es(cov);
    Vector3 n = es.eigenvectors().col(0).normalized();
    const Vector3 toward = viewpoint ? Vector3(*viewpoint - points[i]) : Vector3(points[i] - centroid);
    if (n.dot(toward) < 0) n = -n;
    normals[i] = n;
  }
  return normals;
}

struct BallPivotingOptions {
  double radius = 0.0;                // ball radius, mm; <= 0 selects 2x median spacing
  std::optional<Point3> viewpoint;    // orients estimated normals
  std::vector<Vector3> normals;       // used instead of estimation when non-empty
  std::size_t normal_neighbors = 12;
};

struct BallPivotingResult {
  // Vertices are the input points (unreferenced ones included); triangles wind
  // counter-clockwise seen from the side the ball rolled on.
  TriangleMesh mesh;
  double radius = 0.0;
  std::size_t used_vertices = 0;
  std::size_t boundary_edges = 0;
};

namespace detail {

class BallPivoter {
 public:
  BallPivoter(std::span<const Point3> points, std::vector<Vector3> normals, double radius)
      : pts_(points), normals_(std::move(normals)), radius_(radius), index_(points),
        used_(points.size(), 0), open_edges_(points.size(), 0) {}

  void run() {
    for (std::uint32_t i = 0; i < pts_.size(); ++i) {
      if (used_[i]) continue;
      if (seed_from(i)) expand();
    }
  }

  std::vector<TriangleMesh::Triangle> triangles;

  std::size_t boundary_edge_count() const {
    std::size_t n = 0;
    for (const auto& [k, e] : edges_) n += (e.faces == 1);
    return n;
  }

  std::size_t used_count() const {
    std::size_t n = 0;
    for (auto u : used_) n += u;
    return n;
  }

 private:
  struct Edge {
    std::uint32_t from, to;  // traversal direction inside its first triangle
    std::uint32_t opposite;
    Point3 center;           // ball center resting on that triangle
    int faces = 1;
    bool boundary = false;   // pivoting failed
  };

  static std::uint64_t key(std::uint32_t a, std::uint32_t b) {
    const auto lo = std::min(a, b), hi = std::max(a, b);
    return (std::uint64_t(lo) << 32) | hi;
  }

  /// Ball center for the triangle (a, b, c) on the side of its CCW normal.
  std::optional<Point3> ball_center(std::uint32_t a, std::uint32_t b, std::uint32_t c) const {
    const Vector3 ab = pts_[b] - pts_[a], ac = pts_[c] - pts_[a];
    const Vector3 n = ab.cross(ac);
    const double n2 = n.squaredNorm();
    if (n2 < 1e-18 * radius_ * radius_ * radius_ * radius_) return std::nullopt;
    const Point3 cc = pts_[a] + (ac.squaredNorm() * n.cross(ab) + ab.squaredNorm() * ac.cross(n)) / (2.0 * n2);
    const double h2 = radius_ * radius_ - (cc - pts_[a]).squaredNorm();
    if (h2 < 0) return std::nullopt;
    return cc + std::sqrt(h2) * n / std::sqrt(n2);
  }

  bool ball_empty(const Point3& center, std::uint32_t a, std::uint32_t b, std::uint32_t c) const {
    return !index_.any_within(center, radius_ * (1.0 - 1e-9),
                              [&](std::size_t i) { return i == a || i == b || i == c; });
  }

  bool normals_agree(std::uint32_t a, std::uint32_t b, std::uint32_t c) const {
    const Vector3 n = (pts_[b] - pts_[a]).cross(pts_[c] - pts_[a]);
    return n.dot(normals_[a]) > 0 && n.dot(normals_[b]) > 0 && n.dot(normals_[c]) > 0;
  }

  void add_triangle(std::uint32_t a, std::uint32_t b, std::uint32_t c, const Point3& center) {
    triangles.push_back({a, b, c});
    used_[a] = used_[b] = used_[c] = 1;
    const std::uint32_t tri[3] = {a, b, c};
    for (int k = 0; k < 3; ++k) {
      const std::uint32_t from = tri[k], to = tri[(k + 1) % 3], opp = tri[(k + 2) % 3];
      auto it = edges_.find(key(from, to));
      if (it == edges_.end()) {
        edges_.emplace(key(from, to), Edge{from, to, opp, center});
        ++open_edges_[from];
        ++open_edges_[to];
        front_.push_back(key(from, to));
      } else {
        it->second.faces = 2;
        --open_edges_[from];
        --open_edges_[to];
      }
    }
  }

  bool seed_from(std::uint32_t p) {
    auto nbrs = index_.radius(pts_[p], 2.0 * radius_);
    std::sort(nbrs.begin(), nbrs.end(), [&](std::size_t x, std::size_t y) {
      const double dx = (pts_[x] - pts_[p]).squaredNorm(), dy = (pts_[y] - pts_[p]).squaredNorm();
      return dx != dy ? dx < dy : x < y;
    });
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      const auto q = static_cast<std::uint32_t>(nbrs[i]);
      if (q == p || used_[q]) continue;
      for (std::size_t j = i + 1; j < nbrs.size(); ++j) {
        auto s = static_cast<std::uint32_t>(nbrs[j]);
        if (s == p || used_[s]) continue;
        std::uint32_t b = q, c = s;
        const Vector3 n = (pts_[b] - pts_[p]).cross(pts_[c] - pts_[p]);
        if (n.dot(normals_[p]) < 0) std::swap(b, c);
        if (!normals_agree(p, b, c)) continue;
        const auto center = ball_center(p, b, c);
        if (!center || !ball_empty(*center, p, b, c)) continue;
        add_triangle(p, b, c, *center);
        return true;
      }
    }
    return false;
  }

  void expand() {
    while (!front_.empty()) {
      const std::uint64_t k = front_.front();
      front_.pop_front();
      auto it = edges_.find(k);
      if (it == edges_.end() || it->second.faces != 1 || it->second.boundary) continue;
      if (!pivot(it->second)) it->second.boundary = true;
    }
  }

  bool pivot(const Edge& e) {
    const std::uint32_t a = e.from, b = e.to, c = e.opposite;
    const Point3 m = 0.5 * (pts_[a] + pts_[b]);
    const Vector3 axis = (pts_[b] - pts_[a]).normalized();
    const Vector3 v0 = e.center - m;
    // in-plane direction pointing away from the opposite vertex
    Vector3 away = pts_[c] - m;
    away = -(away - away.dot(axis) * axis);

    struct Candidate {
      double angle;
      std::uint32_t index;
      Point3 center;
    };
    std::vector<Candidate> cands;
    for (auto xi : index_.radius(m, 2.0 * radius_)) {
      const auto x = static_cast<std::uint32_t>(xi);
      if (x == a || x == b || x == c) continue;
      if ((pts_[x] - m).dot(away) <= 0) continue;
      // new triangle traverses the edge the other way: (b, a, x)
      if (!normals_agree(b, a, x)) continue;
      const auto center = ball_center(b, a, x);
      if (!center) continue;
      const Vector3 vx = *center - m;
      double angle = std::atan2(axis.dot(v0.cross(vx)), v0.dot(vx));
      if (angle < 0) angle += 2.0 * std::numbers::pi;
      // co-spherical points land a rounding error short of a full turn
      if (angle > 2.0 * std::numbers::pi - 1e-9) angle = 0.0;
      cands.push_back({angle, x, *center});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& l, const Candidate& r) {
      return l.angle != r.angle ? l.angle < r.angle : l.index < r.index;
    });
    for (const auto& cand : cands) {
      const std::uint32_t x = cand.index;
      if (!ball_empty(cand.center, a, b, x)) continue;
      // First empty ball decides the edge: either it is glued or the edge is boundary.
      if (used_[x] && open_edges_[x] == 0) return false;  // interior vertex
      if (!edge_accepts(a, x) || !edge_accepts(x, b)) return false;
      add_triangle(b, a, x, cand.center);
      return true;
    }
    return false;
  }

  // A new triangle traversing from -> to may reuse an existing edge only if
  // that edge is open and was traversed to -> from.
  bool edge_accepts(std::uint32_t from, std::uint32_t to) const {
    auto it = edges_.find(key(from, to));
    if (it == edges_.end()) return true;
    return it->second.faces == 1 && it->second.from == to && it->second.to == from;
  }

  std::span<const Point3> pts_;
  std::vector<Vector3> normals_;
  double radius_;
  SpatialIndex index_;
  std::vector<std::uint8_t> used_;
  std::vector<int> open_edges_;
  std::unordered_map<std::uint64_t, Edge> edges_;
  std::deque<std::uint64_t> front_;
};

}  // namespace detail

/// Single-radius ball-pivoting surface reconstruction.
inline BallPivotingResult reconstruct_surface(std::span<const Point3> points, const BallPivotingOptions& options = {}) {
  if (points.size() < 3) {
    throw Error(ErrorCode::kReconstructionFailed, "need at least 3 points, got " + std::to_string(points.size()));
  }
  double radius = options.radius;
  if (radius <= 0) radius = 2.0 * median_spacing(points);
  if (!(radius > 0)) throw Error(ErrorCode::kInvalidArgument, "ball radius must be positive");

  std::vector<Vector3> normals = options.normals;
  if (normals.empty()) {
    normals = estimate_normals(points, options.normal_neighbors, options.viewpoint);
  } else if (normals.size() != points.size()) {
    throw Error(ErrorCode::kInvalidArgument, "normal count differs from point count");
  }

  detail::BallPivoter pivoter(points, normals, radius);
  pivoter.run();
  if (pivoter.triangles.empty()) {
    const double suggested = points.size() >= 2 ? 2.0 * median_spacing(points) : 0.0;
    throw Error(ErrorCode::kReconstructionFailed,
                "ball of radius " + std::to_string(radius) + " mm seeds no triangle; try about " +
                    std::to_string(suggested) + " mm (2x median nearest-neighbor spacing)");
  }
  BallPivotingResult out;
  out.radius = radius;
  out.mesh.vertices.assign(points.begin(), points.end());
  out.mesh.normals = std::move(normals);
  out.mesh.triangles = std::move(pivoter.triangles);
  out.used_vertices = pivoter.used_count();
  out.boundary_edges = pivoter.boundary_edge_count();
  return out;
}

}  // namespace nirplan
