#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nirplan/ball_pivoting.hpp"
#include "nirplan/error.hpp"
#include "nirplan/geometry.hpp"
#include "nirplan/ply_io.hpp"
#include "nirplan/point_cloud.hpp"
#include "nirplan/spatial_index.hpp"

namespace nirplan {

struct MarginSet {
  std::vector<std::size_t> indices;  // sorted cloud indices
  double margin = 5.0;
};

/// Relabels every healthy point within `margin` (closed ball) of a tumor point
/// as margin. Points already labeled margin are re-evaluated as healthy.
inline MarginSet find_margin(LabeledPointCloud& cloud, double margin = 5.0) {
  cloud.validate();
  if (!(margin > 0)) throw Error(ErrorCode::kInvalidArgument, "margin must be positive");
  std::vector<Point3> tumor;
  std::size_t healthy = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.labels[i] == Label::kMargin) cloud.labels[i] = Label::kHealthy;
    if (cloud.labels[i] == Label::kTumor) tumor.push_back(cloud.points[i]);
    healthy += cloud.labels[i] == Label::kHealthy;
  }
  if (tumor.empty()) throw Error(ErrorCode::kNoTumor, "cloud has no tumor-labeled points");
  if (healthy == 0) throw Error(ErrorCode::kNoHealthyTissue, "cloud has no healthy-labeled points");
  const SpatialIndex index(tumor);
  MarginSet out;
  out.margin = margin;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.labels[i] != Label::kHealthy) continue;
    if (index.nearest(cloud.points[i]).distance <= margin) {
      cloud.labels[i] = Label::kMargin;
      out.indices.push_back(i);
    }
  }
  return out;
}

struct LoopReport {
  std::vector<std::uint32_t> loop;                 // mesh vertex indices, closure implied
  std::vector<std::vector<std::uint32_t>> others;  // further closed loops, largest first
  std::size_t candidate_count = 0;                 // healthy vertices adjacent to a margin vertex
  std::size_t filled_holes = 0;                    // occlusion holes absorbed into the margin region
};

namespace detail {

inline std::vector<std::vector<std::uint32_t>> walk_loops(
    std::map<std::uint32_t, std::set<std::uint32_t>> next, std::vector<std::vector<std::uint32_t>>* fragments) {
  std::vector<std::vector<std::uint32_t>> loops;
  while (true) {
    auto start = std::find_if(next.begin(), next.end(), [](const auto& kv) { return !kv.second.empty(); });
    if (start == next.end()) break;
    const std::uint32_t first = start->first;
    std::vector<std::uint32_t> path{first};
    std::uint32_t cur = first;
    bool closed = false;
    while (true) {
      auto& outs = next[cur];
      if (outs.empty()) break;
      // prefer closing the loop, then the lowest vertex index
      std::uint32_t to = outs.count(first) && path.size() > 2 ? first : *outs.begin();
      outs.erase(to);
      if (to == first) {
        closed = true;
        break;
      }
      path.push_back(to);
      cur = to;
    }
    if (closed && path.size() >= 3) {
      loops.push_back(std::move(path));
    } else if (fragments) {
      fragments->push_back(std::move(path));
    }
  }
  return loops;
}

}  // namespace detail

/// Orders the outer edge of the margin band into closed vertex loops.
///
/// The region R is every triangle touching a margin or tumor vertex. Holes in
/// the mesh that border R (surface hidden from the camera behind the tumor)
/// are absorbed into R, as are mesh fragments lying wholly inside R; R reaching
/// the outer rim of the observed surface is an error. The boundary of R is
/// walked along consistently oriented half-edges.
inline LoopReport extract_incision_loop(const TriangleMesh& mesh, std::span<const Label> labels) {
  if (labels.size() != mesh.vertices.size()) {
    throw Error(ErrorCode::kAlignment, "vertex label count differs from mesh vertex count");
  }
  auto inner = [&](std::uint32_t v) { return labels[v] == Label::kMargin || labels[v] == Label::kTumor; };

  LoopReport report;
  std::set<std::uint32_t> candidates;
  std::size_t margin_vertices = 0;
  for (auto l : labels) margin_vertices += l == Label::kMargin;
  if (margin_vertices == 0) throw Error(ErrorCode::kInvalidArgument, "mesh has no margin vertices");
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      const auto a = t[k], b = t[(k + 1) % 3];
      if (labels[a] == Label::kMargin && labels[b] == Label::kHealthy) candidates.insert(b);
      if (labels[b] == Label::kMargin && labels[a] == Label::kHealthy) candidates.insert(a);
    }
  }
  report.candidate_count = candidates.size();
  if (candidates.empty()) {
    throw Error(ErrorCode::kMarginAtCloudBoundary,
                "no healthy surface beyond the margin band; the margin reaches the edge of the observed cloud");
  }

  // Directed half-edges and the mesh's own boundary loops.
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> owner;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    for (int k = 0; k < 3; ++k) owner[{t[k], t[(k + 1) % 3]}] = i;
  }
  std::vector<std::uint8_t> in_region(mesh.triangles.size(), 0);
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    in_region[i] = inner(t[0]) || inner(t[1]) || inner(t[2]);
  }

  std::map<std::uint32_t, std::set<std::uint32_t>> rim_next;
  for (const auto& [e, tri] : owner) {
    if (!owner.count({e.second, e.first})) rim_next[e.first].insert(e.second);
  }
  const auto rims = detail::walk_loops(rim_next, nullptr);

  // Per connected rim group the longest loop is the outer silhouette; shorter
  // ones are holes. Components are found by union-find over triangle edges.
  std::vector<std::uint32_t> parent(mesh.vertices.size());
  for (std::uint32_t i = 0; i < parent.size(); ++i) parent[i] = i;
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) parent[find(t[k])] = find(t[(k + 1) % 3]);
  }
  auto rim_length = [&](const std::vector<std::uint32_t>& l) {
    double s = 0;
    for (std::size_t i = 0; i < l.size(); ++i) s += distance(mesh.vertices[l[i]], mesh.vertices[l[(i + 1) % l.size()]]);
    return s;
  };
  // Components lying wholly inside R are reconstruction debris floating in a
  // hole, not observed surface around the band; their rims are ignored.
  std::map<std::uint32_t, bool> reaches_outside;  // component root -> has a triangle outside R
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    auto& flag = reaches_outside[find(mesh.triangles[i][0])];
    flag = flag || !in_region[i];
  }
  std::map<std::uint32_t, std::size_t> outer_of;  // component root -> rim index
  for (std::size_t i = 0; i < rims.size(); ++i) {
    const auto root = find(rims[i][0]);
    auto it = outer_of.find(root);
    if (it == outer_of.end() || rim_length(rims[i]) > rim_length(rims[it->second])) outer_of[root] = i;
  }

  std::set<std::pair<std::uint32_t, std::uint32_t>> filled;  // rim half-edges of absorbed holes
  for (std::size_t i = 0; i < rims.size(); ++i) {
    const auto& l = rims[i];
    bool touches = false;
    for (std::size_t k = 0; k < l.size(); ++k) {
      if (in_region[owner.at({l[k], l[(k + 1) % l.size()]})]) touches = true;
    }
    if (!touches || !reaches_outside.at(find(l[0]))) continue;
    if (outer_of.at(find(l[0])) == i) {
      throw Error(ErrorCode::kMarginAtCloudBoundary,
                  "the margin band reaches the outer edge of the observed surface; move the camera to center the tumor");
    }
    ++report.filled_holes;
    for (std::size_t k = 0; k < l.size(); ++k) filled.insert({l[k], l[(k + 1) % l.size()]});
  }

  std::map<std::uint32_t, std::set<std::uint32_t>> next;
  for (const auto& [e, tri] : owner) {
    const bool twin = owner.count({e.second, e.first}) > 0;
    if (in_region[tri]) {
      if (twin && !in_region[owner.at({e.second, e.first})]) next[e.first].insert(e.second);
      // mesh-rim edges of R are either absorbed holes or (rejected above) the outer rim
    } else if (!twin && filled.count(e)) {
      // the absorbed hole face borders this outside triangle along the reversed edge
      next[e.second].insert(e.first);
    }
  }
  std::vector<std::vector<std::uint32_t>> fragments;
  auto loops = detail::walk_loops(next, &fragments);
  if (loops.empty()) {
    std::ostringstream msg;
    msg << "margin boundary does not close; " << fragments.size() << " fragment(s):";
    for (const auto& f : fragments) msg << ' ' << f.size() << " vertices from " << f.front();
    throw Error(ErrorCode::kFragmentedBoundary, msg.str());
  }
  std::stable_sort(loops.begin(), loops.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
  report.loop = std::move(loops.front());
  report.others.assign(std::make_move_iterator(loops.begin() + 1), std::make_move_iterator(loops.end()));
  return report;
}

struct IncisionPath {
  std::vector<Point3> positions;
  std::vector<Vector3> axes;  // unit tool axes, outward surface normal
  std::vector<double> times;  // seconds from the first pose
  bool closed = true;
  double speed = 2.0;         // mm/s
  double perimeter = 0.0;     // mm, closed polyline length

  std::size_t size() const { return positions.size(); }
  double total_time() const { return perimeter / speed; }
};

struct ToolPathOptions {
  double speed = 2.0;     // mm/s
  double max_step = 1.0;  // mm
  // Optional keep-out: samples closer than `clearance` to any of these points
  // are pushed radially out to that distance.
  std::vector<Point3> keep_out;
  double clearance = 0.0;
};

namespace detail {

inline void push_clear(Point3& p, const SpatialIndex& keep_out, double clearance) {
  for (int iter = 0; iter < 20; ++iter) {
    const auto nn = keep_out.nearest(p);
    if (nn.distance >= clearance) return;
    const Point3& q = keep_out.point(nn.index);
    const Vector3 d = p - q;
    if (d.norm() == 0.0) return;
    p = q + d * (clearance * (1.0 + 1e-12) / d.norm());
  }
}

}  // namespace detail

/// Resamples a closed vertex loop by arc length and attaches tool axes from
/// area-weighted mesh normals.
inline IncisionPath make_tool_path(std::span<const std::uint32_t> loop, const TriangleMesh& mesh,
                                   const ToolPathOptions& options = {}) {
  if (!(options.speed > 0)) throw Error(ErrorCode::kInvalidArgument, "tool speed must be positive");
  if (!(options.max_step > 0)) throw Error(ErrorCode::kInvalidArgument, "max step must be positive");
  if (loop.size() < 3) throw Error(ErrorCode::kDegenerateLoop, "loop needs at least 3 vertices");
  for (auto v : loop) {
    if (v >= mesh.vertices.size()) throw Error(ErrorCode::kInvalidArgument, "loop vertex out of range");
  }
  const std::size_t n = loop.size();
  std::vector<double> cum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    cum[i + 1] = cum[i] + distance(mesh.vertices[loop[i]], mesh.vertices[loop[(i + 1) % n]]);
  }
  const double length = cum[n];
  if (!(length > 1e-9)) throw Error(ErrorCode::kDegenerateLoop, "loop has zero perimeter");

  const auto vertex_normals = mesh.area_weighted_normals();
  std::optional<SpatialIndex> keep_out;
  if (!options.keep_out.empty() && options.clearance > 0) keep_out.emplace(options.keep_out);

  // Point and axis at arc position s along the closed polyline.
  auto sample = [&](double s) {
    s = std::fmod(s, length);
    if (s < 0) s += length;
    std::size_t seg = std::upper_bound(cum.begin(), cum.end(), s) - cum.begin() - 1;
    seg = std::min(seg, n - 1);
    while (seg + 1 < n && cum[seg + 1] - cum[seg] <= 0) ++seg;
    const double span = cum[seg + 1] - cum[seg];
    const double f = span > 0 ? (s - cum[seg]) / span : 0.0;
    const auto a = loop[seg], b = loop[(seg + 1) % n];
    Point3 p = (1 - f) * mesh.vertices[a] + f * mesh.vertices[b];
    Vector3 axis = (1 - f) * vertex_normals[a] + f * vertex_normals[b];
    if (axis.norm() < 1e-12) axis = vertex_normals[f < 0.5 ? a : b];
    if (axis.norm() < 1e-12) axis = Vector3::UnitZ();
    if (keep_out) detail::push_clear(p, *keep_out, options.clearance);
    return std::pair<Point3, Vector3>{p, axis.normalized()};
  };

  // Subdivide uniformly; refine any chord the clearance push stretched.
  const auto segments = static_cast<std::size_t>(std::ceil(length / options.max_step));
  std::vector<double> arcs;
  std::vector<std::pair<Point3, Vector3>> poses;
  for (std::size_t k = 0; k < segments; ++k) {
    const double s = length * static_cast<double>(k) / static_cast<double>(segments);
    arcs.push_back(s);
    poses.push_back(sample(s));
  }
  for (int pass = 0; pass < 20; ++pass) {
    std::vector<double> arcs2;
    std::vector<std::pair<Point3, Vector3>> poses2;
    bool split = false;
    for (std::size_t k = 0; k < arcs.size(); ++k) {
      arcs2.push_back(arcs[k]);
      poses2.push_back(poses[k]);
      const std::size_t j = (k + 1) % arcs.size();
      if (distance(poses[k].first, poses[j].first) > options.max_step) {
        const double s_end = j == 0 ? length : arcs[j];
        const double mid = 0.5 * (arcs[k] + s_end);
        arcs2.push_back(mid);
        poses2.push_back(sample(mid));
        split = true;
      }
    }
    arcs.swap(arcs2);
    poses.swap(poses2);
    if (!split) break;
  }

  IncisionPath path;
  path.speed = options.speed;
  double t = 0.0;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    if (k > 0) t += distance(poses[k - 1].first, poses[k].first) / options.speed;
    path.positions.push_back(poses[k].first);
    path.axes.push_back(poses[k].second);
    path.times.push_back(t);
  }
  path.perimeter = t * options.speed + distance(path.positions.back(), path.positions.front());
  // Coincident consecutive samples would stall the clock; drop them.
  for (std::size_t k = 1; k < path.times.size();) {
    if (path.times[k] <= path.times[k - 1]) {
      path.positions.erase(path.positions.begin() + k);
      path.axes.erase(path.axes.begin() + k);
      path.times.erase(path.times.begin() + k);
    } else {
      ++k;
    }
  }
  return path;
}

/// Rows "t,x,y,z,nx,ny,nz" with shortest round-trip number formatting.
inline void write_path_csv(const std::filesystem::path& file, const IncisionPath& path) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + file.string() + " for writing");
  out << "t,x,y,z,nx,ny,nz\n";
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto& p = path.positions[i];
    const auto& n = path.axes[i];
    out << io::format_double(path.times[i]) << ',' << io::format_double(p.x()) << ',' << io::format_double(p.y()) << ','
        << io::format_double(p.z()) << ',' << io::format_double(n.x()) << ',' << io::format_double(n.y()) << ','
        << io::format_double(n.z()) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + file.string());
}

/// Speed is recovered from the timestamps; the path is assumed closed.
inline IncisionPath read_path_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + file.string());
  IncisionPath path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == 't' || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(io::parse_double(cell));
    if (v.size() != 7) {
      throw Error(ErrorCode::kParse, file.string() + ":" + std::to_string(lineno) + ": expected 7 columns");
    }
    path.times.push_back(v[0]);
    path.positions.emplace_back(v[1], v[2], v[3]);
    path.axes.emplace_back(v[4], v[5], v[6]);
  }
  if (path.size() < 2) throw Error(ErrorCode::kParse, file.string() + ": path needs at least two poses");
  double arc = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) arc += distance(path.positions[i - 1], path.positions[i]);
  path.speed = path.times.back() > 0 ? arc / path.times.back() : 1.0;
  path.perimeter = arc + distance(path.positions.back(), path.positions.front());
  return path;
}

inline nlohmann::json path_to_json(const IncisionPath& path, double margin, std::size_t loop_count) {
  nlohmann::json j;
  j["margin_mm"] = margin;
  j["speed_mm_s"] = path.speed;
  j["perimeter_mm"] = path.perimeter;
  j["total_time_s"] = path.total_time();
  j["loop_count"] = loop_count;
  j["closed"] = path.closed;
  auto& poses = j["poses"] = nlohmann::json::array();
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto& p = path.positions[i];
    const auto& n = path.axes[i];
    poses.push_back({{"t", path.times[i]}, {"position", {p.x(), p.y(), p.z()}}, {"axis", {n.x(), n.y(), n.z()}}});
  }
  return j;
}

inline IncisionPath path_from_json(const nlohmann::json& j) {
  try {
    IncisionPath path;
    path.speed = j.at("speed_mm_s").get<double>();
    path.perimeter = j.at("perimeter_mm").get<double>();
    path.closed = j.at("closed").get<bool>();
    for (const auto& pose : j.at("poses")) {
      const auto& p = pose.at("position");
      const auto& n = pose.at("axis");
      path.times.push_back(pose.at("t").get<double>());
      path.positions.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
      path.axes.emplace_back(n.at(0).get<double>(), n.at(1).get<double>(), n.at(2).get<double>());
    }
    return path;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("path JSON: ") + e.what());
  }
}

// ---- Whole planner ---------------------------------------------------------

struct PlannerOptions {
  double margin = 5.0;           // mm
  double speed = 2.0;            // mm/s
  double max_step = 1.0;         // mm
  double ball_radius = 0.0;      // mm; <= 0 picks 2x median spacing
  std::optional<Point3> viewpoint;  // sensor origin in the cloud frame, orients normals
};

struct PlanResult {
  LabeledPointCloud cloud;                 // input labels plus margin
  MarginSet margins;
  BallPivotingResult surface;              // over the non-background points
  std::vector<std::size_t> vertex_to_cloud;
  std::vector<Label> vertex_labels;
  LoopReport loop;
  IncisionPath path;

  std::vector<Point3> loop_points() const {
    std::vector<Point3> out;
    for (auto v : loop.loop) out.push_back(surface.mesh.vertices[v]);
    return out;
  }
};

inline PlanResult plan_incision(const LabeledPointCloud& cloud, const PlannerOptions& options = {}) {
  PlanResult r;
  r.cloud = cloud;
  r.margins = find_margin(r.cloud, options.margin);

  std::vector<Point3> tissue;
  for (std::size_t i = 0; i < r.cloud.size(); ++i) {
    if (r.cloud.labels[i] == Label::kBackground) continue;
    r.vertex_to_cloud.push_back(i);
    r.vertex_labels.push_back(r.cloud.labels[i]);
    tissue.push_back(r.cloud.points[i]);
  }
  BallPivotingOptions bpa;
  bpa.radius = options.ball_radius;
  bpa.viewpoint = options.viewpoint;
  r.surface = reconstruct_surface(tissue, bpa);
  r.loop = extract_incision_loop(r.surface.mesh, r.vertex_labels);

  ToolPathOptions tp;
  tp.speed = options.speed;
  tp.max_step = options.max_step;
  tp.keep_out = r.cloud.points_with(Label::kTumor);
  tp.clearance = options.margin;
  r.path = make_tool_path(r.loop.loop, r.surface.mesh, tp);
  return r;
}

}  // namespace nirplan
