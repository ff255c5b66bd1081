#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "nirplan/error.hpp"

namespace nirplan {

// All lengths are millimeters.
using Point3 = Eigen::Vector3d;
using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

inline bool is_finite(const Point3& p) {
  return std::isfinite(p.x()) && std::isfinite(p.y()) && std::isfinite(p.z());
}

inline double distance(const Point3& a, const Point3& b) { return (a - b).norm(); }

/// Proper rigid motion x -> R x + t. The rotation is validated on construction.
class RigidTransform {
 public:
  static constexpr double kOrthonormalTolerance = 1e-9;

  RigidTransform() : rotation_(Matrix3::Identity()), translation_(Vector3::Zero()) {}

  RigidTransform(const Matrix3& rotation, const Vector3& translation)
      : rotation_(rotation), translation_(translation) {
    if (!rotation_.allFinite() || !is_finite(translation_)) {
      throw Error(ErrorCode::kInvalidTransform, "non-finite transform entries");
    }
    const double ortho_err = (rotation_.transpose() * rotation_ - Matrix3::Identity()).cwiseAbs().maxCoeff();
    if (ortho_err > kOrthonormalTolerance) {
      throw Error(ErrorCode::kInvalidTransform,
                  "rotation is not orthonormal (max |R^T R - I| = " + std::to_string(ortho_err) + ")");
    }
    if (std::abs(rotation_.determinant() - 1.0) > kOrthonormalTolerance) {
      throw Error(ErrorCode::kInvalidTransform, "rotation determinant is not +1");
    }
  }

  static RigidTransform identity() { return {}; }

  static RigidTransform translation(const Vector3& t) { return {Matrix3::Identity(), t}; }

  static RigidTransform rotation(const Vector3& axis, double angle_rad,
                                 const Vector3& t = Vector3::Zero()) {
    return {Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix(), t};
  }

  /// Re-orthonormalizes a nearly orthonormal matrix (polar decomposition via SVD)
  /// before validating. Used where a rotation comes out of accumulated arithmetic.
  static RigidTransform from_approximate(const Matrix3& rotation, const Vector3& translation);

  /// Camera-style look-at: returns the camera-from-world transform for a camera at
  /// `eye` whose +z axis points at `target` and whose -y axis is closest to `up`.
  static RigidTransform look_at(const Point3& eye, const Point3& target, const Vector3& up);

  const Matrix3& rotation() const { return rotation_; }
  const Vector3& translation() const { return translation_; }

  Point3 apply(const Point3& p) const { return rotation_ * p + translation_; }
  Vector3 apply_direction(const Vector3& v) const { return rotation_ * v; }

  RigidTransform inverse() const {
    Matrix3 rt = rotation_.transpose();
    return from_trusted(rt, -(rt * translation_));
  }

  /// Rotation angle of the relative motion, radians.
  double rotation_angle() const {
    // atan2 form keeps full precision near zero, where acos(trace) does not
    const Vector3 axis_sin(rotation_(2, 1) - rotation_(1, 2), rotation_(0, 2) - rotation_(2, 0),
                           rotation_(1, 0) - rotation_(0, 1));
    return std::atan2(0.5 * axis_sin.norm(), 0.5 * (rotation_.trace() - 1.0));
  }

  friend RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner);

 private:
  static RigidTransform from_trusted(const Matrix3& r, const Vector3& t) {
    RigidTransform out;
    out.rotation_ = r;
    out.translation_ = t;
    return out;
  }

  Matrix3 rotation_;
  Vector3 translation_;
};

/// Closest proper rotation in the Frobenius sense.
inline Matrix3 nearest_rotation(const Matrix3& m) {
  Eigen::JacobiSVD<Matrix3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 d = Matrix3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

inline Point3 apply_transform(const RigidTransform& t, const Point3& p) { return t.apply(p); }

/// compose(a, b) applies b first, then a.
inline RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner) {
  Matrix3 r = outer.rotation_ * inner.rotation_;
  // Products of orthonormal matrices drift by ~1 ulp per multiply; re-project
  // only when the drift is visible so exact inputs stay exact.
  const double drift = (r.transpose() * r - Matrix3::Identity()).cwiseAbs().maxCoeff();
  if (drift > 1e-13) r = nearest_rotation(r);
  return RigidTransform::from_trusted(r, outer.rotation_ * inner.translation_ + outer.translation_);
}

inline RigidTransform RigidTransform::from_approximate(const Matrix3& rotation, const Vector3& translation) {
  return {nearest_rotation(rotation), translation};
}

inline RigidTransform RigidTransform::look_at(const Point3& eye, const Point3& target, const Vector3& up) {
  const Vector3 z = (target - eye).normalized();
  Vector3 x = z.cross(-up);
  if (x.norm() < 1e-9) {
    // up parallel to view direction; pick any perpendicular
    x = z.unitOrthogonal();
  }
  x.normalize();
  const Vector3 y = z.cross(x);
  Matrix3 world_from_cam;
  world_from_cam.col(0) = x;
  world_from_cam.col(1) = y;
  world_from_cam.col(2) = z;
  return from_approximate(world_from_cam.transpose(), -(world_from_cam.transpose() * eye));
}

/// Indexed triangle surface. Normals, when present, are per vertex.
struct TriangleMesh {
  using Triangle = std::array<std::uint32_t, 3>;

  std::vector<Point3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Vector3> normals;

  static constexpr double kDegenerateArea = 1e-12;

  bool has_normals() const { return !normals.empty(); }

  double triangle_area(const Triangle& t) const {
    return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
  }

  Vector3 triangle_normal(const Triangle& t) const {
    return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).normalized();
  }

  /// Throws kInvalidMesh on the first violated invariant.
  void validate() const {
    for (const auto& v : vertices) {
      if (!is_finite(v)) throw Error(ErrorCode::kInvalidMesh, "non-finite vertex");
    }
    for (std::size_t i = 0; i < triangles.size(); ++i) {
      const auto& t = triangles[i];
      for (auto idx : t) {
        if (idx >= vertices.size()) {
          throw Error(ErrorCode::kInvalidMesh, "triangle " + std::to_string(i) + " index out of range");
        }
      }
      if (triangle_area(t) <= kDegenerateArea) {
        throw Error(ErrorCode::kInvalidMesh, "triangle " + std::to_string(i) + " is degenerate");
      }
    }
    if (has_normals()) {
      if (normals.size() != vertices.size()) {
        throw Error(ErrorCode::kInvalidMesh, "normal count differs from vertex count");
      }
      for (const auto& n : normals) {
        if (std::abs(n.norm() - 1.0) > 1e-9) throw Error(ErrorCode::kInvalidMesh, "normal is not unit length");
      }
    }
  }

  /// Area-weighted vertex normals (cross products are proportional to area).
  std::vector<Vector3> area_weighted_normals() const {
    std::vector<Vector3> acc(vertices.size(), Vector3::Zero());
    for (const auto& t : triangles) {
      const Vector3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
      for (auto idx : t) acc[idx] += n;
    }
    for (auto& n : acc) {
      const double len = n.norm();
      if (len > 0) n /= len;
    }
    return acc;
  }
};

}  // namespace nirplan
