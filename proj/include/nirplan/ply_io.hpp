#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "nirplan/error.hpp"
#include "nirplan/geometry.hpp"
#include "nirplan/point_cloud.hpp"

namespace nirplan::io {

/// In-memory form of the ASCII PLY subset used here: one vertex element with
/// x/y/z, optional nx/ny/nz and any number of integer properties, plus an
/// optional face element of vertex-index lists.
struct PlyData {
  std::vector<Point3> positions;
  std::vector<Vector3> normals;
  std::vector<std::pair<std::string, std::vector<int>>> int_properties;
  std::vector<TriangleMesh::Triangle> faces;

  const std::vector<int>* find_int(const std::string& name) const {
    for (const auto& [n, v] : int_properties) {
      if (n == name) return &v;
    }
    return nullptr;
  }
};

/// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error(ErrorCode::kIo, "number formatting failed");
  return std::string(buf, ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw Error(ErrorCode::kParse, "bad number '" + s + "'");
  return v;
}

inline void write_ply(const std::filesystem::path& path, const PlyData& data) {
  const std::size_t n = data.positions.size();
  if (!data.normals.empty() && data.normals.size() != n) {
    throw Error(ErrorCode::kInvalidArgument, "normal count differs from vertex count");
  }
  for (const auto& [name, values] : data.int_properties) {
    if (values.size() != n) throw Error(ErrorCode::kInvalidArgument, "property '" + name + "' has wrong length");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << "ply\nformat ascii 1.0\nelement vertex " << n << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (!data.normals.empty()) out << "property double nx\nproperty double ny\nproperty double nz\n";
  for (const auto& [name, values] : data.int_properties) out << "property int " << name << "\n";
  if (!data.faces.empty()) {
    out << "element face " << data.faces.size() << "\nproperty list uchar int vertex_indices\n";
  }
  out << "end_header\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = data.positions[i];
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z());
    if (!data.normals.empty()) {
      const auto& nn = data.normals[i];
      out << ' ' << format_double(nn.x()) << ' ' << format_double(nn.y()) << ' ' << format_double(nn.z());
    }
    for (const auto& prop : data.int_properties) out << ' ' << prop.second[i];
    out << '\n';
  }
  for (const auto& f : data.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

inline PlyData read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  auto fail = [&](const std::string& why) { return Error(ErrorCode::kParse, path.string() + ": " + why); };

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> props;
    bool has_list = false;
  };
  std::vector<Element> elements;
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw fail("missing 'ply' magic");
  bool saw_end = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw fail("only ASCII PLY is supported (got " + fmt + ")");
    } else if (kw == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) throw fail("property before element");
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string ct, it, name;
        ls >> ct >> it >> name;
        elements.back().has_list = true;
        elements.back().props.push_back(name);
      } else {
        std::string name;
        ls >> name;
        elements.back().props.push_back(name);
      }
    } else if (kw == "end_header") {
      saw_end = true;
      break;
    }
  }
  if (!saw_end) throw fail("missing end_header");

  PlyData data;
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
      std::vector<std::pair<std::string, int>> ints;
      for (int k = 0; k < static_cast<int>(e.props.size()); ++k) {
        const auto& p = e.props[k];
        if (p == "x") ix = k;
        else if (p == "y") iy = k;
        else if (p == "z") iz = k;
        else if (p == "nx") inx = k;
        else if (p == "ny") iny = k;
        else if (p == "nz") inz = k;
        else ints.emplace_back(p, k);
      }
      if (ix < 0 || iy < 0 || iz < 0) throw fail("vertex element lacks x/y/z");
      const bool normals = inx >= 0 && iny >= 0 && inz >= 0;
      for (const auto& [name, k] : ints) data.int_properties.push_back({name, {}});
      std::vector<std::string> tok(e.props.size());
      for (std::size_t i = 0; i < e.count; ++i) {
        for (auto& t : tok) {
          if (!(in >> t)) throw fail("truncated vertex data");
        }
        data.positions.emplace_back(parse_double(tok[ix]), parse_double(tok[iy]), parse_double(tok[iz]));
        if (normals) data.normals.emplace_back(parse_double(tok[inx]), parse_double(tok[iny]), parse_double(tok[inz]));
        for (std::size_t j = 0; j < ints.size(); ++j) {
          data.int_properties[j].second.push_back(static_cast<int>(parse_double(tok[ints[j].second])));
        }
      }
    } else if (e.name == "face") {
      for (std::size_t i = 0; i < e.count; ++i) {
        int k = 0;
        if (!(in >> k)) throw fail("truncated face data");
        if (k != 3) throw fail("only triangular faces are supported");
        TriangleMesh::Triangle t{};
        for (auto& v : t) {
          if (!(in >> v)) throw fail("truncated face data");
        }
        data.faces.push_back(t);
      }
    } else {
      // skip unknown elements (one record per line)
      std::getline(in, line);
      for (std::size_t i = 0; i < e.count; ++i) std::getline(in, line);
    }
  }
  return data;
}

// Property names: scene meshes carry "class"; rendered clouds carry the
// renderer ground truth as "truth_class"; segmented clouds carry "label".
inline constexpr const char* kSceneClassProperty = "class";
inline constexpr const char* kTruthProperty = "truth_class";
inline constexpr const char* kLabelProperty = "label";

inline void write_mesh_ply(const std::filesystem::path& path, const TriangleMesh& mesh,
                           const std::vector<Label>* classes = nullptr) {
  PlyData d;
  d.positions = mesh.vertices;
  d.normals = mesh.normals;
  d.faces = mesh.triangles;
  if (classes) {
    std::vector<int> c(classes->size());
    for (std::size_t i = 0; i < classes->size(); ++i) c[i] = static_cast<int>((*classes)[i]);
    d.int_properties.push_back({kSceneClassProperty, std::move(c)});
  }
  write_ply(path, d);
}

inline TriangleMesh read_mesh_ply(const std::filesystem::path& path, std::vector<Label>* classes = nullptr) {
  PlyData d = read_ply(path);
  TriangleMesh mesh;
  mesh.vertices = std::move(d.positions);
  mesh.normals = std::move(d.normals);
  mesh.triangles = std::move(d.faces);
  mesh.validate();
  if (classes) {
    classes->clear();
    if (const auto* c = d.find_int(kSceneClassProperty)) {
      for (int v : *c) classes->push_back(label_from_int(v));
    }
  }
  return mesh;
}

/// Labels go to "label" and renderer truth, when present, to "truth_class".
/// With `truth_only` the labels are skipped: a freshly rendered cloud has
/// not been segmented yet.
inline void write_cloud_ply(const std::filesystem::path& path, const LabeledPointCloud& cloud,
                            bool truth_only = false) {
  cloud.validate();
  PlyData d;
  d.positions = cloud.points;
  auto to_ints = [](const std::vector<Label>& ls) {
    std::vector<int> v;
    v.reserve(ls.size());
    for (auto l : ls) v.push_back(static_cast<int>(l));
    return v;
  };
  if (truth_only) {
    if (!cloud.truth) throw Error(ErrorCode::kInvalidArgument, "cloud has no ground truth to write");
    d.int_properties.push_back({kTruthProperty, to_ints(*cloud.truth)});
  } else {
    d.int_properties.push_back({kLabelProperty, to_ints(cloud.labels)});
    if (cloud.truth) d.int_properties.push_back({kTruthProperty, to_ints(*cloud.truth)});
  }
  write_ply(path, d);
}

inline LabeledPointCloud read_cloud_ply(const std::filesystem::path& path, std::string frame) {
  PlyData d = read_ply(path);
  LabeledPointCloud cloud;
  cloud.frame = std::move(frame);
  cloud.points = std::move(d.positions);
  auto to_labels = [](const std::vector<int>& v) {
    std::vector<Label> out;
    out.reserve(v.size());
    for (int x : v) out.push_back(label_from_int(x));
    return out;
  };
  if (const auto* l = d.find_int(kLabelProperty)) {
    cloud.labels = to_labels(*l);
    if (const auto* t = d.find_int(kTruthProperty)) cloud.truth = to_labels(*t);
  } else if (const auto* t = d.find_int(kTruthProperty)) {
    // rendered, not yet segmented: truth is known, labels start as background
    cloud.truth = to_labels(*t);
    cloud.labels.assign(cloud.points.size(), Label::kBackground);
  } else {
    cloud.labels.assign(cloud.points.size(), Label::kBackground);
  }
  cloud.validate();
  return cloud;
}

}  // namespace nirplan::io
