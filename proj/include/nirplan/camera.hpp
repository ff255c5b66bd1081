#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>

#include "nirplan/error.hpp"
#include "nirplan/geometry.hpp"

namespace nirplan {

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

/// Ideal pinhole camera. `pose` maps world coordinates into the camera frame
/// (+z forward, +x right, +y down in the image).
struct CameraModel {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  RigidTransform pose;
  // Optional lens mapping applied to normalized coordinates; identity when unset.
  std::function<Pixel(Pixel)> distortion;

  static CameraModel from_fov(int width, int height, double vfov_deg, const RigidTransform& pose) {
    CameraModel cam;
    cam.width = width;
    cam.height = height;
    cam.fy = 0.5 * height / std::tan(0.5 * vfov_deg * std::numbers::pi / 180.0);
    cam.fx = cam.fy;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.pose = pose;
    cam.validate();
    return cam;
  }

  void validate() const {
    if (!(fx > 0 && fy > 0)) throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
    if (width <= 0 || height <= 0) throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
    if (!(cx >= 0 && cx <= width && cy >= 0 && cy <= height)) {
      throw Error(ErrorCode::kInvalidArgument, "principal point outside the image");
    }
  }

  Point3 center_in_world() const { return pose.inverse().translation(); }

  bool in_bounds(const Pixel& px) const { return px.u >= 0 && px.v >= 0 && px.u < width && px.v < height; }
};

/// Projects a camera-frame point. std::nullopt marks points at or behind the
/// image plane.
inline std::optional<Pixel> project_camera_frame(const CameraModel& cam, const Point3& p_cam) {
  if (!(p_cam.z() > 0.0)) return std::nullopt;
  Pixel n{p_cam.x() / p_cam.z(), p_cam.y() / p_cam.z()};
  if (cam.distortion) n = cam.distortion(n);
  return Pixel{cam.fx * n.u + cam.cx, cam.fy * n.v + cam.cy};
}

inline std::optional<Pixel> project(const CameraModel& cam, const Point3& p_world) {
  return project_camera_frame(cam, cam.pose.apply(p_world));
}

/// Unit ray direction (camera frame) through a continuous pixel coordinate.
/// Ignores the distortion hook.
inline Vector3 pixel_ray(const CameraModel& cam, const Pixel& px) {
  return Vector3((px.u - cam.cx) / cam.fx, (px.v - cam.cy) / cam.fy, 1.0).normalized();
}

/// Inverse of project() for a known camera-frame depth (z), returned in world coordinates.
inline Point3 back_project(const CameraModel& cam, const Pixel& px, double depth) {
  const Point3 p_cam((px.u - cam.cx) / cam.fx * depth, (px.v - cam.cy) / cam.fy * depth, depth);
  return cam.pose.inverse().apply(p_cam);
}

}  // namespace nirplan
