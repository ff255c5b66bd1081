#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "nirplan/camera.hpp"
#include "nirplan/error.hpp"
#include "nirplan/geometry.hpp"
#include "nirplan/point_cloud.hpp"

namespace nirplan {

struct Correspondence {
  Point3 source;
  Point3 target;
};

struct RigidFit {
  RigidTransform transform;  // maps source onto target
  double rms = 0.0;          // residual RMS, mm
};

/// Least-squares rigid alignment (SVD of the cross-covariance, reflection
/// corrected). Needs at least three non-collinear correspondences.
inline RigidFit estimate_rigid_transform(const std::vector<Correspondence>& pairs) {
  if (pairs.size() < 3) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "need at least 3 correspondences, got " + std::to_string(pairs.size()));
  }
  Point3 cs = Point3::Zero(), ct = Point3::Zero();
  for (const auto& c : pairs) {
    cs += c.source;
    ct += c.target;
  }
  cs /= static_cast<double>(pairs.size());
  ct /= static_cast<double>(pairs.size());

  Matrix3 cov = Matrix3::Zero();
  Matrix3 scatter = Matrix3::Zero();
  for (const auto& c : pairs) {
    const Vector3 a = c.source - cs;
    cov += (c.target - ct) * a.transpose();
    scatter += a * a.transpose();
  }
  // Collinear (or coincident) sources leave at least two near-zero principal spreads.
  Eigen::SelfAdjointEigenSolver<Matrix3> spread(scatter);
  const Vector3 ev = spread.eigenvalues();
  if (ev[1] <= 1e-12 * std::max(1.0, ev[2])) {
    throw Error(ErrorCode::kDegenerateConfiguration, "correspondences are collinear");
  }

  Eigen::JacobiSVD<Matrix3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 d = Matrix3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1.0;
  const Matrix3 r = svd.matrixU() * d * svd.matrixV().transpose();
  RigidFit fit{RigidTransform::from_approximate(r, ct - r * cs), 0.0};

  double sq = 0.0;
  for (const auto& c : pairs) sq += (fit.transform.apply(c.source) - c.target).squaredNorm();
  fit.rms = std::sqrt(sq / static_cast<double>(pairs.size()));
  return fit;
}

/// Reads CSV rows "x1,y1,z1,x2,y2,z2" (source then target). Lines starting
/// with '#' and a non-numeric header row are skipped.
inline std::vector<Correspondence> read_correspondences_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<Correspondence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric && lineno == 1) continue;
    if (!numeric || v.size() != 6) {
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(lineno) + ": expected 6 numbers");
    }
    out.push_back({{v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
  }
  return out;
}

inline void write_correspondences_csv(const std::filesystem::path& path, const std::vector<Correspondence>& pairs) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "x1,y1,z1,x2,y2,z2\n";
  for (const auto& c : pairs) {
    out << c.source.x() << ',' << c.source.y() << ',' << c.source.z() << ',' << c.target.x() << ','
        << c.target.y() << ',' << c.target.z() << '\n';
  }
}

/// Named coordinate frames joined by rigid transforms. An edge (to, from)
/// stores T such that p_to = T p_from; the reverse direction is implied.
/// Insertions that contradict an existing path are rejected.
class FrameGraph {
 public:
  static constexpr double kTranslationTolerance = 1e-6;  // mm
  static constexpr double kRotationTolerance = 1e-8;     // rad

  void add_frame(const std::string& name) { adjacency_.try_emplace(name); }

  bool has_frame(const std::string& name) const { return adjacency_.count(name) > 0; }

  void add_edge(const std::string& to, const std::string& from, const RigidTransform& to_from) {
    if (to == from) throw Error(ErrorCode::kFrameGraph, "self edge on frame '" + to + "'");
    if (has_frame(to) && has_frame(from)) {
      if (auto existing = find(to, from)) {
        const RigidTransform loop = compose(existing->inverse(), to_from);
        if (loop.translation().norm() > kTranslationTolerance || loop.rotation_angle() > kRotationTolerance) {
          throw Error(ErrorCode::kFrameGraph, "edge " + from + " -> " + to +
                                                  " contradicts the existing frame chain (cycle inconsistency)");
        }
        return;  // consistent and redundant
      }
    }
    adjacency_[to].push_back({from, to_from.inverse()});
    adjacency_[from].push_back({to, to_from});
    edges_.push_back({to, from, to_from});
  }

  /// Transform mapping coordinates in `from` to coordinates in `to`.
  RigidTransform transform(const std::string& to, const std::string& from) const {
    if (!has_frame(to) || !has_frame(from)) {
      throw Error(ErrorCode::kFrameGraph, "unknown frame '" + (has_frame(to) ? from : to) + "'");
    }
    auto t = find(to, from);
    if (!t) throw Error(ErrorCode::kFrameGraph, "frames '" + from + "' and '" + to + "' are not connected");
    return *t;
  }

  struct Edge {
    std::string to, from;
    RigidTransform to_from;
  };
  const std::vector<Edge>& edges() const { return edges_; }

  std::vector<std::string> frames() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : adjacency_) out.push_back(k);
    return out;
  }

 private:
  struct Link {
    std::string neighbor;
    RigidTransform neighbor_from_self;
  };

  // Breadth-first search; returns T_to_from.
  std::optional<RigidTransform> find(const std::string& to, const std::string& from) const {
    std::map<std::string, RigidTransform> reached;  // frame -> T_frame_from
    reached.emplace(from, RigidTransform::identity());
    std::queue<std::string> todo;
    todo.push(from);
    while (!todo.empty()) {
      const std::string cur = todo.front();
      todo.pop();
      if (cur == to) return reached.at(cur);
      for (const auto& link : adjacency_.at(cur)) {
        if (reached.count(link.neighbor)) continue;
        reached.emplace(link.neighbor, compose(link.neighbor_from_self, reached.at(cur)));
        todo.push(link.neighbor);
      }
    }
    return std::nullopt;
  }

  std::map<std::string, std::vector<Link>> adjacency_;
  std::vector<Edge> edges_;
};

enum class ProjectionStatus : std::uint8_t { kInImage, kOutOfBounds, kBehindCamera };

struct PointProjection {
  Pixel pixel;
  ProjectionStatus status = ProjectionStatus::kBehindCamera;
};

/// Moves every cloud point into `camera_frame` through the graph and projects it
/// with the camera intrinsics. Nothing is dropped; status flags mark misses.
inline std::vector<PointProjection> map_cloud_to_image(const LabeledPointCloud& cloud, const FrameGraph& graph,
                                                       const CameraModel& cam, const std::string& camera_frame) {
  cam.validate();
  const RigidTransform cam_from_cloud = graph.transform(camera_frame, cloud.frame);
  std::vector<PointProjection> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    PointProjection pp;
    if (auto px = project_camera_frame(cam, cam_from_cloud.apply(p))) {
      pp.pixel = *px;
      pp.status = cam.in_bounds(*px) ? ProjectionStatus::kInImage : ProjectionStatus::kOutOfBounds;
    }
    out.push_back(pp);
  }
  return out;
}

/// Planar checkerboard corners in the world frame (z = height), centered at `center`.
inline std::vector<Point3> checkerboard_corners(int cols, int rows, double square, const Point3& center) {
  std::vector<Point3> pts;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      pts.emplace_back(center.x() + (c - 0.5 * (cols - 1)) * square, center.y() + (r - 0.5 * (rows - 1)) * square,
                       center.z());
    }
  }
  return pts;
}

/// Simulated sensor observation of the board: world corners paired with their
/// camera-frame coordinates, perturbed by isotropic Gaussian noise.
inline std::vector<Correspondence> observe_board(const std::vector<Point3>& corners, const RigidTransform& cam_from_world,
                                                 double noise_std, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Correspondence> out;
  out.reserve(corners.size());
  for (const auto& p : corners) {
    Point3 q = cam_from_world.apply(p);
    if (noise_std > 0) q += noise_std * Vector3(gauss(rng), gauss(rng), gauss(rng));
    out.push_back({p, q});
  }
  return out;
}

}  // namespace nirplan
