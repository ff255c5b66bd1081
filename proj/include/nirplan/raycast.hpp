#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "nirplan/geometry.hpp"

namespace nirplan {

struct RayHit {
  double t = 0.0;  // distance along the unit direction
  Point3 point;
  std::size_t mesh = 0;
  std::size_t triangle = 0;
};

/// Bounding-volume hierarchy over the triangles of several meshes; answers
/// first-hit queries.
class RayCaster {
 public:
  explicit RayCaster(std::vector<const TriangleMesh*> meshes) : meshes_(std::move(meshes)) {
    for (std::size_t m = 0; m < meshes_.size(); ++m) {
      for (std::size_t t = 0; t < meshes_[m]->triangles.size(); ++t) {
        const auto& tri = meshes_[m]->triangles[t];
        Prim p;
        p.mesh = m;
        p.tri = t;
        p.a = meshes_[m]->vertices[tri[0]];
        p.e1 = meshes_[m]->vertices[tri[1]] - p.a;
        p.e2 = meshes_[m]->vertices[tri[2]] - p.a;
        p.lo = p.a.cwiseMin(p.a + p.e1).cwiseMin(p.a + p.e2);
        p.hi = p.a.cwiseMax(p.a + p.e1).cwiseMax(p.a + p.e2);
        p.centroid = p.a + (p.e1 + p.e2) / 3.0;
        prims_.push_back(p);
      }
    }
    if (!prims_.empty()) build(0, prims_.size());
  }

  std::optional<RayHit> first_hit(const Point3& origin, const Vector3& unit_dir,
                                  double t_max = std::numeric_limits<double>::infinity()) const {
    if (prims_.empty()) return std::nullopt;
    const Vector3 inv(1.0 / unit_dir.x(), 1.0 / unit_dir.y(), 1.0 / unit_dir.z());
    double best = t_max;
    std::size_t best_prim = prims_.size();
    std::int32_t stack[64];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const Node& n = nodes_[stack[--sp]];
      if (!slab(n.lo, n.hi, origin, inv, best)) continue;
      if (n.left < 0) {
        for (std::size_t i = n.begin; i < n.end; ++i) {
          const double t = intersect(prims_[i], origin, unit_dir);
          if (t < best) {
            best = t;
            best_prim = i;
          }
        }
      } else {
        stack[sp++] = n.left;
        stack[sp++] = n.right;
      }
    }
    if (best_prim == prims_.size()) return std::nullopt;
    const Prim& p = prims_[best_prim];
    return RayHit{best, origin + best * unit_dir, p.mesh, p.tri};
  }

 private:
  struct Prim {
    std::size_t mesh, tri;
    Point3 a;
    Vector3 e1, e2;
    Eigen::Vector3d lo, hi, centroid;
  };
  struct Node {
    Eigen::Vector3d lo, hi;
    std::size_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
  };

  static constexpr std::size_t kLeafSize = 4;

  std::int32_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    Eigen::Vector3d lo = prims_[begin].lo, hi = prims_[begin].hi;
    Eigen::Vector3d clo = prims_[begin].centroid, chi = clo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(prims_[i].lo);
      hi = hi.cwiseMax(prims_[i].hi);
      clo = clo.cwiseMin(prims_[i].centroid);
      chi = chi.cwiseMax(prims_[i].centroid);
    }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    if (end - begin <= kLeafSize) return id;
    int axis = 0;
    (chi - clo).maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(prims_.begin() + begin, prims_.begin() + mid, prims_.begin() + end,
                     [axis](const Prim& a, const Prim& b) { return a.centroid[axis] < b.centroid[axis]; });
    const auto l = build(begin, mid);
    const auto r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  static bool slab(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, const Point3& o, const Vector3& inv,
                   double t_max) {
    double t0 = 0.0, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
      double ta = (lo[a] - o[a]) * inv[a];
      double tb = (hi[a] - o[a]) * inv[a];
      if (ta > tb) std::swap(ta, tb);
      // NaN from 0 * inf (ray parallel and on the slab plane) must not reject
      t0 = ta > t0 ? ta : t0;
      t1 = tb < t1 ? tb : t1;
      if (t0 > t1 * (1 + 1e-12) + 1e-12) return false;
    }
    return true;
  }

  // Moller-Trumbore; returns +inf on miss.
  static double intersect(const Prim& p, const Point3& o, const Vector3& d) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    const Vector3 pv = d.cross(p.e2);
    const double det = p.e1.dot(pv);
    if (std::abs(det) < 1e-14) return kInf;
    const double inv_det = 1.0 / det;
    const Vector3 tv = o - p.a;
    const double u = tv.dot(pv) * inv_det;
    if (u < 0.0 || u > 1.0) return kInf;
    const Vector3 qv = tv.cross(p.e1);
    const double v = d.dot(qv) * inv_det;
    if (v < 0.0 || u + v > 1.0) return kInf;
    const double t = p.e2.dot(qv) * inv_det;
    return t > 1e-9 ? t : kInf;
  }

  std::vector<const TriangleMesh*> meshes_;
  std::vector<Prim> prims_;
  std::vector<Node> nodes_;
};

}  // namespace nirplan
