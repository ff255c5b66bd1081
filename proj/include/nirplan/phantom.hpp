#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "nirplan/camera.hpp"
#include "nirplan/error.hpp"
#include "nirplan/geometry.hpp"
#include "nirplan/image.hpp"
#include "nirplan/point_cloud.hpp"
#include "nirplan/raycast.hpp"

namespace nirplan {

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

/// Synthetic kidney phantom: an ellipsoid kidney with a spherical tumor whose
/// exposed cap protrudes by `protrusion * tumor_radius` above the surface.
struct PhantomSpec {
  Vector3 kidney_semi_axes{60.0, 40.0, 25.0};
  // Tumor site on the ellipsoid: longitude / latitude in degrees.
  double tumor_azimuth_deg = 0.0;
  double tumor_elevation_deg = 90.0;
  double tumor_radius = 15.0;
  double protrusion = 0.6;
  double dye_concentration = 0.0031544977112233094;  // w/w fraction
  double vertex_density = 1.0;                         // vertices per mm^2
  // Low-order radial bumps on the tumor, as a fraction of its radius.
  double tumor_irregularity = 0.0;
  bool table = true;
  std::uint64_t seed = 1;

  void validate() const {
    auto fail = [](const std::string& why) { throw Error(ErrorCode::kInvalidPhantom, why); };
    if (!(kidney_semi_axes.minCoeff() > 0)) fail("kidney semi-axes must be positive");
    if (!(tumor_radius > 0)) fail("tumor radius must be positive");
    if (!(tumor_radius < kidney_semi_axes.minCoeff())) {
      fail("tumor radius " + std::to_string(tumor_radius) + " mm must be below the smallest kidney semi-axis");
    }
    if (!(protrusion > 0 && protrusion <= 1)) fail("protrusion fraction must lie in (0, 1]");
    if (!(dye_concentration >= 0 && dye_concentration <= 0.05)) fail("dye concentration must lie in [0, 0.05]");
    if (!(vertex_density > 0)) fail("vertex density must be positive");
    if (!(tumor_irregularity >= 0 && tumor_irregularity < 0.5)) fail("tumor irregularity must lie in [0, 0.5)");
    if (!(tumor_elevation_deg >= -90 && tumor_elevation_deg <= 90)) fail("tumor elevation must lie in [-90, 90]");
  }
};

struct Scene {
  TriangleMesh kidney;
  TriangleMesh tumor;
  TriangleMesh table;  // empty when the spec disables it
  std::vector<Label> kidney_classes;
  std::vector<Label> tumor_classes;
  std::vector<Point3> tumor_points;  // every tumor-class vertex
  Point3 tumor_center;               // sphere center
  Point3 tumor_site;                 // surface point below the tumor apex
  Vector3 tumor_normal;              // outward kidney normal at tumor_site
  double tumor_radius = 0.0;
  double dye_concentration = 0.0;
  std::uint64_t seed = 1;

  Point3 tumor_apex() const { return tumor_center + tumor_radius * tumor_normal; }
};

namespace detail {

/// Unit icosphere after `level` midpoint subdivisions; outward CCW triangles.
inline TriangleMesh icosphere(int level) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : m.vertices) v.normalize();
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mids;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto it = mids.find(key);
      if (it != mids.end()) return it->second;
      const auto id = static_cast<std::uint32_t>(m.vertices.size());
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      mids.emplace(key, id);
      return id;
    };
    std::vector<TriangleMesh::Triangle> next;
    next.reserve(m.triangles.size() * 4);
    for (const auto& tri : m.triangles) {
      const auto ab = midpoint(tri[0], tri[1]);
      const auto bc = midpoint(tri[1], tri[2]);
      const auto ca = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.triangles = std::move(next);
  }
  return m;
}

inline std::size_t icosphere_vertex_count(int level) { return 10 * (std::size_t(1) << (2 * level)) + 2; }

inline int level_for(double area, double density) {
  const double wanted = area * density;
  int level = 0;
  while (level < 7 && static_cast<double>(icosphere_vertex_count(level)) < wanted) ++level;
  return level;
}

// Knud Thomsen's approximation, relative error below 1.1 %.
inline double ellipsoid_area(const Vector3& s) {
  constexpr double p = 1.6075;
  const double ap = std::pow(s.x(), p), bp = std::pow(s.y(), p), cp = std::pow(s.z(), p);
  return 4.0 * std::numbers::pi * std::pow((ap * bp + ap * cp + bp * cp) / 3.0, 1.0 / p);
}

inline Point3 ellipsoid_point(const Vector3& s, double azimuth, double elevation) {
  return {s.x() * std::cos(elevation) * std::cos(azimuth), s.y() * std::cos(elevation) * std::sin(azimuth),
          s.z() * std::sin(elevation)};
}

inline Vector3 ellipsoid_normal(const Vector3& s, const Point3& p) {
  return Vector3(p.x() / (s.x() * s.x()), p.y() / (s.y() * s.y()), p.z() / (s.z() * s.z())).normalized();
}

}  // namespace detail

/// Deterministic scene construction from a validated spec.
inline Scene generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  Scene scene;
  scene.seed = spec.seed;
  scene.tumor_radius = spec.tumor_radius;
  scene.dye_concentration = spec.dye_concentration;

  const Vector3& s = spec.kidney_semi_axes;
  scene.kidney = detail::icosphere(detail::level_for(detail::ellipsoid_area(s), spec.vertex_density));
  for (auto& v : scene.kidney.vertices) v = v.cwiseProduct(s);
  scene.kidney.normals.reserve(scene.kidney.vertices.size());
  for (const auto& v : scene.kidney.vertices) scene.kidney.normals.push_back(detail::ellipsoid_normal(s, v));

  const double az = deg2rad(spec.tumor_azimuth_deg), el = deg2rad(spec.tumor_elevation_deg);
  scene.tumor_site = detail::ellipsoid_point(s, az, el);
  scene.tumor_normal = detail::ellipsoid_normal(s, scene.tumor_site);
  scene.tumor_center = scene.tumor_site + scene.tumor_normal * spec.tumor_radius * (spec.protrusion - 1.0);

  const double r = spec.tumor_radius;
  scene.tumor = detail::icosphere(detail::level_for(4.0 * std::numbers::pi * r * r, spec.vertex_density));

  // radial bumps: a few random cosine lobes, deterministic in the seed
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::array<std::pair<Vector3, double>, 4> lobes;
  for (auto& [dir, amp] : lobes) {
    dir = Vector3(unit(rng), unit(rng), unit(rng));
    if (dir.norm() < 1e-6) dir = Vector3::UnitX();
    dir.normalize();
    amp = unit(rng);
  }
  for (auto& v : scene.tumor.vertices) {
    double bump = 0.0;
    if (spec.tumor_irregularity > 0) {
      for (const auto& [dir, amp] : lobes) bump += amp * std::pow(std::max(0.0, v.dot(dir)), 2.0);
      bump *= spec.tumor_irregularity / static_cast<double>(lobes.size());
    }
    scene.tumor.normals.push_back(v);
    v = scene.tumor_center + r * (1.0 + bump) * v;
  }
  if (spec.tumor_irregularity > 0) scene.tumor.normals = scene.tumor.area_weighted_normals();

  scene.tumor_classes.assign(scene.tumor.vertices.size(), Label::kTumor);
  scene.kidney_classes.reserve(scene.kidney.vertices.size());
  for (const auto& v : scene.kidney.vertices) {
    const bool inside = (v - scene.tumor_center).norm() < r;
    scene.kidney_classes.push_back(inside ? Label::kTumor : Label::kHealthy);
  }
  scene.tumor_points = scene.tumor.vertices;
  for (std::size_t i = 0; i < scene.kidney.vertices.size(); ++i) {
    if (scene.kidney_classes[i] == Label::kTumor) scene.tumor_points.push_back(scene.kidney.vertices[i]);
  }

  if (spec.table) {
    // The kidney rests on a 600 mm square table touching its lowest point.
    const double z = -s.z();
    constexpr double h = 300.0;
    scene.table.vertices = {{-h, -h, z}, {h, -h, z}, {h, h, z}, {-h, h, z}};
    scene.table.triangles = {{0, 1, 2}, {0, 2, 3}};
    scene.table.normals.assign(4, Vector3::UnitZ());
  }
  scene.kidney.validate();
  scene.tumor.validate();
  return scene;
}

/// Linear dye response: healthy tissue shines at background * (intercept +
/// slope * concentration); tumor stays at its own (dark) level.
struct DyeModel {
  // Least-squares line through three calibration samples
  // (0.38 %, 0.97 %, 2.04 % w/w -> SBR 6.1142, 8.3795, 11.1838).
  double slope = 300.1615591018216;     // SBR per unit w/w fraction
  double intercept = 5.167341048816084;  // SBR at zero concentration
  double background_level = 100.0;
  double tumor_level = 80.0;
  double noise_std = 0.02;  // multiplicative, fraction of signal

  void validate() const {
    auto fail = [](const std::string& why) { throw Error(ErrorCode::kInvalidArgument, "dye model: " + why); };
    if (!(slope > 0)) fail("slope must be positive");
    if (!(intercept >= 0)) fail("intercept must be non-negative");
    if (!(background_level > 0)) fail("background level must be positive");
    if (!(tumor_level >= 0 && tumor_level <= background_level * intercept)) {
      fail("tumor level must not exceed the zero-concentration healthy level");
    }
    if (!(noise_std >= 0)) fail("noise std must be non-negative");
  }

  double model_sbr(double concentration) const { return intercept + slope * concentration; }
  double healthy_level(double concentration) const { return background_level * model_sbr(concentration); }
  double concentration_for_sbr(double sbr) const { return (sbr - intercept) / slope; }
};

struct DepthRenderOptions {
  double depth_noise_std = 0.0;  // mm, additive along the viewing ray
  std::uint64_t seed = 1;
  std::string frame = "depth";
};

namespace detail {

inline std::vector<const TriangleMesh*> scene_meshes(const Scene& scene) {
  std::vector<const TriangleMesh*> meshes{&scene.kidney, &scene.tumor};
  if (!scene.table.triangles.empty()) meshes.push_back(&scene.table);
  return meshes;
}

inline Label mesh_label(std::size_t mesh) {
  switch (mesh) {
    case 0: return Label::kHealthy;
    case 1: return Label::kTumor;
    default: return Label::kBackground;
  }
}

struct PixelHit {
  bool hit = false;
  Label label = Label::kBackground;
  Point3 point;  // world
  double t = 0;
};

inline std::vector<PixelHit> cast_all(const Scene& scene, const CameraModel& cam) {
  cam.validate();
  RayCaster caster(scene_meshes(scene));
  const RigidTransform world_from_cam = cam.pose.inverse();
  const Point3 origin = world_from_cam.translation();
  std::vector<PixelHit> hits(std::size_t(cam.width) * cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Vector3 dir = world_from_cam.apply_direction(pixel_ray(cam, {x + 0.5, y + 0.5}));
      if (auto h = caster.first_hit(origin, dir)) {
        auto& ph = hits[std::size_t(y) * cam.width + x];
        ph.hit = true;
        ph.label = mesh_label(h->mesh);
        ph.point = h->point;
        ph.t = h->t;
      }
    }
  }
  return hits;
}

}  // namespace detail

/// One ray per pixel center; the first surface hit becomes a point in the
/// camera frame. Labels are left as background; renderer truth goes to `truth`.
inline LabeledPointCloud render_depth_cloud(const Scene& scene, const CameraModel& cam,
                                            const DepthRenderOptions& opts = {}) {
  const auto hits = detail::cast_all(scene, cam);
  LabeledPointCloud cloud;
  cloud.frame = opts.frame;
  cloud.truth.emplace();
  std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const RigidTransform world_from_cam = cam.pose.inverse();
  const Point3 origin = world_from_cam.translation();
  for (const auto& h : hits) {
    if (!h.hit) continue;
    Point3 p = h.point;
    if (opts.depth_noise_std > 0) {
      const Vector3 dir = (h.point - origin) / h.t;
      p += dir * (opts.depth_noise_std * gauss(rng));
    }
    cloud.points.push_back(cam.pose.apply(p));
    cloud.truth->push_back(h.label);
  }
  if (cloud.points.empty()) throw Error(ErrorCode::kEmptyCloud, "scene is entirely outside the camera frustum");
  cloud.labels.assign(cloud.points.size(), Label::kBackground);
  return cloud;
}

/// Per-pixel ground-truth class as seen by `cam`.
inline SegmentationMask render_truth_mask(const Scene& scene, const CameraModel& cam) {
  const auto hits = detail::cast_all(scene, cam);
  SegmentationMask mask(cam.width, cam.height);
  bool any = false;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    mask.classes[i] = hits[i].hit ? hits[i].label : Label::kBackground;
    any = any || hits[i].hit;
  }
  if (!any) throw Error(ErrorCode::kEmptyCloud, "scene is entirely outside the camera frustum");
  return mask;
}

/// Surface-emission NIR image with multiplicative Gaussian noise.
inline IntensityImage render_nir_image(const Scene& scene, const CameraModel& cam, const DyeModel& dye,
                                       std::uint64_t seed) {
  dye.validate();
  const SegmentationMask truth = render_truth_mask(scene, cam);
  IntensityImage img(cam.width, cam.height);
  const double healthy = dye.healthy_level(scene.dye_concentration);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < truth.classes.size(); ++i) {
    double v = dye.background_level;
    if (truth.classes[i] == Label::kHealthy) v = healthy;
    if (truth.classes[i] == Label::kTumor) v = dye.tumor_level;
    if (dye.noise_std > 0) v *= 1.0 + dye.noise_std * gauss(rng);
    img.values[i] = std::max(0.0, v);
  }
  return img;
}

/// Viewing setup relative to the tumor: the camera sits `standoff` mm from the
/// tumor site along the surface normal tilted by `obliquity_deg`.
struct ViewSpec {
  double standoff = 400.0;
  double obliquity_deg = 0.0;
  double obliquity_azimuth_deg = 0.0;  // direction of the tilt in the tangent plane
  double vfov_deg = 60.0;
  int width = 640;
  int height = 480;
};

/// Tangent frame at the tumor site: (t1, t2, n), t1 following the kidney's long axis.
inline std::pair<Vector3, Vector3> tumor_tangents(const Scene& scene) {
  const Vector3& n = scene.tumor_normal;
  Vector3 t1 = Vector3::UnitX() - n * n.x();
  if (t1.norm() < 1e-6) t1 = Vector3::UnitY() - n * n.y();
  t1.normalize();
  return {t1, n.cross(t1)};
}

inline CameraModel camera_facing_tumor(const Scene& scene, const ViewSpec& view) {
  const auto [t1, t2] = tumor_tangents(scene);
  const double a = deg2rad(view.obliquity_azimuth_deg);
  const Vector3 tilt_dir = std::cos(a) * t1 + std::sin(a) * t2;
  const double ob = deg2rad(view.obliquity_deg);
  const Vector3 dir = std::cos(ob) * scene.tumor_normal + std::sin(ob) * tilt_dir;
  const Point3 eye = scene.tumor_site + view.standoff * dir;
  return CameraModel::from_fov(view.width, view.height, view.vfov_deg,
                               RigidTransform::look_at(eye, scene.tumor_site, t2));
}

/// A second camera rigidly mounted `baseline` mm along the first camera's +x axis,
/// same orientation.
inline CameraModel offset_camera(const CameraModel& base, double baseline, int width, int height, double vfov_deg) {
  const RigidTransform shift = RigidTransform::translation(Vector3(-baseline, 0, 0));
  return CameraModel::from_fov(width, height, vfov_deg, compose(shift, base.pose));
}

}  // namespace nirplan
