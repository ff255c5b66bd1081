#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "nirplan/calibration.hpp"
#include "nirplan/error.hpp"
#include "nirplan/phantom.hpp"
#include "nirplan/ply_io.hpp"
#include "nirplan/segmentation.hpp"

namespace nirplan {

struct DepthCameraConfig {
  ViewSpec view;
  double depth_noise_std = 0.0;  // mm
};

struct NirCameraConfig {
  double baseline = 25.0;  // mm along the depth camera's x axis
  double vfov_deg = 60.0;
  int width = 640;
  int height = 480;
};

struct CalibrationConfig {
  int board_cols = 9;
  int board_rows = 6;
  double square = 25.0;         // mm
  double corner_noise = 0.05;   // mm, per coordinate
  // Deliberate error applied to the depth -> NIR edge after fitting.
  double rotation_error_deg = 0.0;
  double translation_error_mm = 0.0;
};

struct PlannerConfig {
  double margin = 5.0;       // mm
  double speed = 2.0;        // mm/s
  double max_step = 1.0;     // mm
  double ball_radius = 0.0;  // mm; 0 = 2x median point spacing
};

struct EvaluationConfig {
  double tool_offset = 0.5;    // mm
  double dsc_threshold = 0.1;  // mm
};

struct ExperimentConfig {
  std::string name = "run";
  std::uint64_t seed = 1;
  PhantomSpec phantom;
  DepthCameraConfig depth_camera;
  NirCameraConfig nir_camera;
  DyeModel dye;
  CalibrationConfig calibration;
  SegmentationParams segmentation;
  std::string mask;  // external segmentation mask (PGM 0/1/2); empty = built-in segmenter
  PlannerConfig planner;
  EvaluationConfig evaluation;
  std::string output_directory = "out";

  /// Throws kValidation naming the first offending field.
  void validate() const {
    auto fail = [](const std::string& why) { throw Error(ErrorCode::kValidation, why); };
    try {
      phantom.validate();
      dye.validate();
    } catch (const Error& e) {
      fail(e.what());
    }
    const auto& v = depth_camera.view;
    if (!(v.standoff > 0)) fail("depth_camera.standoff must be positive");
    if (!(v.vfov_deg > 0 && v.vfov_deg < 180)) fail("depth_camera.vfov_deg must lie in (0, 180)");
    if (v.width <= 0 || v.height <= 0) fail("depth_camera image size must be positive");
    if (!(v.obliquity_deg >= 0 && v.obliquity_deg < 90)) fail("depth_camera.obliquity_deg must lie in [0, 90)");
    if (!(depth_camera.depth_noise_std >= 0)) fail("depth_camera.depth_noise_std must be non-negative");
    if (!(nir_camera.vfov_deg > 0 && nir_camera.vfov_deg < 180)) fail("nir_camera.vfov_deg must lie in (0, 180)");
    if (nir_camera.width <= 0 || nir_camera.height <= 0) fail("nir_camera image size must be positive");
    if (calibration.board_cols < 2 || calibration.board_rows < 2) fail("calibration board needs at least 2x2 corners");
    if (!(calibration.square > 0)) fail("calibration.square must be positive");
    if (!(calibration.corner_noise >= 0)) fail("calibration.corner_noise must be non-negative");
    if (!(calibration.translation_error_mm >= 0 && calibration.rotation_error_deg >= 0)) {
      fail("calibration error magnitudes must be non-negative");
    }
    if (segmentation.min_tumor_area < 1) fail("segmentation.min_tumor_area must be at least 1");
    if (segmentation.histogram_bins < 2) fail("segmentation.histogram_bins must be at least 2");
    if (!mask.empty() && !std::filesystem::exists(mask)) fail("segmentation.mask file not found: " + mask);
    if (!(planner.margin > 0)) fail("planner.margin must be positive");
    if (!(planner.speed > 0)) fail("planner.speed must be positive");
    if (!(planner.max_step > 0)) fail("planner.max_step must be positive");
    if (!(planner.ball_radius >= 0)) fail("planner.ball_radius must be non-negative");
    if (!(evaluation.tool_offset >= 0)) fail("evaluation.tool_offset must be non-negative");
    if (!(evaluation.dsc_threshold > 0)) fail("evaluation.dsc_threshold must be positive");
    if (output_directory.empty()) fail("output.directory must be set");
  }
};

namespace detail {

using Ptree = boost::property_tree::ptree;

class IniReader {
 public:
  IniReader(const Ptree& tree, std::string source) : tree_(tree), source_(std::move(source)) {}

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto node = tree_.get_optional<std::string>(key);
    if (!node) return;
    out = convert<T>(key, *node);
  }

  bool has(const std::string& key) const { return tree_.get_optional<std::string>(key).has_value(); }

  void mark(const std::string& key) { seen_.insert(key); }

  /// Unknown keys are almost always typos; reject them.
  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty()) {
        if (!seen_.count(section)) unknown(section);
        continue;
      }
      for (const auto& [key, value] : body) {
        if (!seen_.count(section + "." + key)) unknown(section + "." + key);
      }
    }
  }

 private:
  [[noreturn]] void unknown(const std::string& key) const {
    throw Error(ErrorCode::kValidation, source_ + ": unknown key '" + key + "'");
  }

  template <typename T>
  T convert(const std::string& key, const std::string& raw) const {
    std::string s = raw;
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        return s;
      } else if constexpr (std::is_same_v<T, bool>) {
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw Error(ErrorCode::kParse, "expected true/false");
      } else if constexpr (std::is_floating_point_v<T>) {
        return io::parse_double(s);
      } else {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size() || v < 0) throw Error(ErrorCode::kParse, "expected a non-negative integer");
        return static_cast<T>(v);
      }
    } catch (const std::exception&) {
      throw Error(ErrorCode::kValidation, source_ + ": cannot parse " + key + " = '" + raw + "'");
    }
  }

  const Ptree& tree_;
  std::string source_;
  std::set<std::string> seen_;
};

inline Ptree read_ini_tree(const std::filesystem::path& path) {
  Ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::kValidation, std::string("config: ") + e.what());
  }
  return tree;
}

}  // namespace detail

/// Reads an INI experiment config. Relative paths inside it resolve against
/// the config file's directory.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kValidation, "config file not found: " + path.string());
  const auto tree = detail::read_ini_tree(path);
  detail::IniReader r(tree, path.string());
  ExperimentConfig c;
  c.name = path.stem().string();
  r.get("name", c.name);
  r.get("seed", c.seed);

  auto& p = c.phantom;
  r.get("phantom.semi_axis_x", p.kidney_semi_axes.x());
  r.get("phantom.semi_axis_y", p.kidney_semi_axes.y());
  r.get("phantom.semi_axis_z", p.kidney_semi_axes.z());
  r.get("phantom.tumor_azimuth_deg", p.tumor_azimuth_deg);
  r.get("phantom.tumor_elevation_deg", p.tumor_elevation_deg);
  if (r.has("phantom.tumor_radius") && r.has("phantom.tumor_diameter")) {
    throw Error(ErrorCode::kValidation, path.string() + ": give tumor_radius or tumor_diameter, not both");
  }
  r.get("phantom.tumor_radius", p.tumor_radius);
  if (r.has("phantom.tumor_diameter")) {
    double d = 0;
    r.get("phantom.tumor_diameter", d);
    p.tumor_radius = d / 2;
  }
  r.mark("phantom.tumor_diameter");
  r.get("phantom.protrusion", p.protrusion);
  r.get("phantom.dye_concentration", p.dye_concentration);
  r.get("phantom.vertex_density", p.vertex_density);
  r.get("phantom.tumor_irregularity", p.tumor_irregularity);
  r.get("phantom.table", p.table);

  auto& v = c.depth_camera.view;
  r.get("depth_camera.standoff", v.standoff);
  r.get("depth_camera.obliquity_deg", v.obliquity_deg);
  r.get("depth_camera.obliquity_azimuth_deg", v.obliquity_azimuth_deg);
  r.get("depth_camera.vfov_deg", v.vfov_deg);
  r.get("depth_camera.width", v.width);
  r.get("depth_camera.height", v.height);
  r.get("depth_camera.depth_noise_std", c.depth_camera.depth_noise_std);

  r.get("nir_camera.baseline", c.nir_camera.baseline);
  r.get("nir_camera.vfov_deg", c.nir_camera.vfov_deg);
  r.get("nir_camera.width", c.nir_camera.width);
  r.get("nir_camera.height", c.nir_camera.height);

  r.get("dye.slope", c.dye.slope);
  r.get("dye.intercept", c.dye.intercept);
  r.get("dye.background_level", c.dye.background_level);
  r.get("dye.tumor_level", c.dye.tumor_level);
  r.get("dye.noise_std", c.dye.noise_std);

  auto& cal = c.calibration;
  r.get("calibration.board_cols", cal.board_cols);
  r.get("calibration.board_rows", cal.board_rows);
  r.get("calibration.square", cal.square);
  r.get("calibration.corner_noise", cal.corner_noise);
  r.get("calibration.rotation_error_deg", cal.rotation_error_deg);
  r.get("calibration.translation_error_mm", cal.translation_error_mm);

  if (r.has("segmentation.healthy_threshold")) {
    double t = 0;
    r.get("segmentation.healthy_threshold", t);
    c.segmentation.healthy_threshold = t;
  }
  r.mark("segmentation.healthy_threshold");
  r.get("segmentation.min_tumor_area", c.segmentation.min_tumor_area);
  r.get("segmentation.histogram_bins", c.segmentation.histogram_bins);
  r.get("segmentation.mask", c.mask);
  if (!c.mask.empty() && std::filesystem::path(c.mask).is_relative()) {
    c.mask = (path.parent_path() / c.mask).string();
  }

  r.get("planner.margin", c.planner.margin);
  r.get("planner.speed", c.planner.speed);
  r.get("planner.max_step", c.planner.max_step);
  r.get("planner.ball_radius", c.planner.ball_radius);

  r.get("evaluation.tool_offset", c.evaluation.tool_offset);
  r.get("evaluation.dsc_threshold", c.evaluation.dsc_threshold);

  r.get("output.directory", c.output_directory);
  r.reject_unknown();
  c.phantom.seed = c.seed;
  return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  const auto& p = c.phantom;
  j["phantom"] = {{"semi_axes", {p.kidney_semi_axes.x(), p.kidney_semi_axes.y(), p.kidney_semi_axes.z()}},
                  {"tumor_azimuth_deg", p.tumor_azimuth_deg},
                  {"tumor_elevation_deg", p.tumor_elevation_deg},
                  {"tumor_radius", p.tumor_radius},
                  {"protrusion", p.protrusion},
                  {"dye_concentration", p.dye_concentration},
                  {"vertex_density", p.vertex_density},
                  {"tumor_irregularity", p.tumor_irregularity},
                  {"table", p.table}};
  const auto& v = c.depth_camera.view;
  j["depth_camera"] = {{"standoff", v.standoff},         {"obliquity_deg", v.obliquity_deg},
                       {"obliquity_azimuth_deg", v.obliquity_azimuth_deg},
                       {"vfov_deg", v.vfov_deg},         {"width", v.width},
                       {"height", v.height},             {"depth_noise_std", c.depth_camera.depth_noise_std}};
  j["nir_camera"] = {{"baseline", c.nir_camera.baseline},
                     {"vfov_deg", c.nir_camera.vfov_deg},
                     {"width", c.nir_camera.width},
                     {"height", c.nir_camera.height}};
  j["dye"] = {{"slope", c.dye.slope},
              {"intercept", c.dye.intercept},
              {"background_level", c.dye.background_level},
              {"tumor_level", c.dye.tumor_level},
              {"noise_std", c.dye.noise_std}};
  const auto& cal = c.calibration;
  j["calibration"] = {{"board_cols", cal.board_cols},
                      {"board_rows", cal.board_rows},
                      {"square", cal.square},
                      {"corner_noise", cal.corner_noise},
                      {"rotation_error_deg", cal.rotation_error_deg},
                      {"translation_error_mm", cal.translation_error_mm}};
  j["segmentation"] = {{"min_tumor_area", c.segmentation.min_tumor_area},
                       {"histogram_bins", c.segmentation.histogram_bins},
                       {"mask", c.mask}};
  j["segmentation"]["healthy_threshold"] =
      c.segmentation.healthy_threshold ? nlohmann::json(*c.segmentation.healthy_threshold) : nlohmann::json();
  j["planner"] = {{"margin", c.planner.margin},
                  {"speed", c.planner.speed},
                  {"max_step", c.planner.max_step},
                  {"ball_radius", c.planner.ball_radius}};
  j["evaluation"] = {{"tool_offset", c.evaluation.tool_offset}, {"dsc_threshold", c.evaluation.dsc_threshold}};
  j["output"] = {{"directory", c.output_directory}};
  return j;
}

/// Writes a config that load_config() reads back to the same values.
inline void save_config(const std::filesystem::path& path, const ExperimentConfig& c) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  using io::format_double;
  out << "name = " << c.name << "\nseed = " << c.seed << "\n\n[phantom]\n";
  const auto& p = c.phantom;
  out << "semi_axis_x = " << format_double(p.kidney_semi_axes.x()) << "\n"
      << "semi_axis_y = " << format_double(p.kidney_semi_axes.y()) << "\n"
      << "semi_axis_z = " << format_double(p.kidney_semi_axes.z()) << "\n"
      << "tumor_azimuth_deg = " << format_double(p.tumor_azimuth_deg) << "\n"
      << "tumor_elevation_deg = " << format_double(p.tumor_elevation_deg) << "\n"
      << "tumor_radius = " << format_double(p.tumor_radius) << "\n"
      << "protrusion = " << format_double(p.protrusion) << "\n"
      << "dye_concentration = " << format_double(p.dye_concentration) << "\n"
      << "vertex_density = " << format_double(p.vertex_density) << "\n"
      << "tumor_irregularity = " << format_double(p.tumor_irregularity) << "\n"
      << "table = " << (p.table ? "true" : "false") << "\n\n[depth_camera]\n";
  const auto& v = c.depth_camera.view;
  out << "standoff = " << format_double(v.standoff) << "\nobliquity_deg = " << format_double(v.obliquity_deg)
      << "\nobliquity_azimuth_deg = " << format_double(v.obliquity_azimuth_deg)
      << "\nvfov_deg = " << format_double(v.vfov_deg) << "\nwidth = " << v.width << "\nheight = " << v.height
      << "\ndepth_noise_std = " << format_double(c.depth_camera.depth_noise_std) << "\n\n[nir_camera]\n";
  out << "baseline = " << format_double(c.nir_camera.baseline) << "\nvfov_deg = " << format_double(c.nir_camera.vfov_deg)
      << "\nwidth = " << c.nir_camera.width << "\nheight = " << c.nir_camera.height << "\n\n[dye]\n";
  out << "slope = " << format_double(c.dye.slope) << "\nintercept = " << format_double(c.dye.intercept)
      << "\nbackground_level = " << format_double(c.dye.background_level)
      << "\ntumor_level = " << format_double(c.dye.tumor_level) << "\nnoise_std = " << format_double(c.dye.noise_std)
      << "\n\n[calibration]\n";
  const auto& cal = c.calibration;
  out << "board_cols = " << cal.board_cols << "\nboard_rows = " << cal.board_rows
      << "\nsquare = " << format_double(cal.square) << "\ncorner_noise = " << format_double(cal.corner_noise)
      << "\nrotation_error_deg = " << format_double(cal.rotation_error_deg)
      << "\ntranslation_error_mm = " << format_double(cal.translation_error_mm) << "\n\n[segmentation]\n";
  if (c.segmentation.healthy_threshold) {
    out << "healthy_threshold = " << format_double(*c.segmentation.healthy_threshold) << "\n";
  }
  out << "min_tumor_area = " << c.segmentation.min_tumor_area << "\nhistogram_bins = " << c.segmentation.histogram_bins
      << "\n";
  if (!c.mask.empty()) out << "mask = " << std::filesystem::absolute(c.mask).string() << "\n";
  out << "\n[planner]\nmargin = " << format_double(c.planner.margin) << "\nspeed = " << format_double(c.planner.speed)
      << "\nmax_step = " << format_double(c.planner.max_step)
      << "\nball_radius = " << format_double(c.planner.ball_radius) << "\n\n[evaluation]\n";
  out << "tool_offset = " << format_double(c.evaluation.tool_offset)
      << "\ndsc_threshold = " << format_double(c.evaluation.dsc_threshold) << "\n\n[output]\n";
  out << "directory = " << c.output_directory << "\n";
}

// ---- Cameras and frame graph ---------------------------------------------------

namespace detail {

inline std::string join_numbers(const double* v, int n) {
  std::string s;
  for (int i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += io::format_double(v[i]);
  }
  return s;
}

inline std::vector<double> split_numbers(const std::string& s, std::size_t expected, const std::string& what) {
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(io::parse_double(tok));
  if (out.size() != expected) {
    throw Error(ErrorCode::kParse, what + ": expected " + std::to_string(expected) + " numbers");
  }
  return out;
}

inline std::string transform_rotation(const RigidTransform& t) {
  double r[9];
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r[3 * i + k] = t.rotation()(i, k);
  }
  return join_numbers(r, 9);
}

inline RigidTransform parse_transform(const std::string& rotation, const std::string& translation,
                                      const std::string& what) {
  const auto r = split_numbers(rotation, 9, what + ".rotation");
  const auto t = split_numbers(translation, 3, what + ".translation");
  Matrix3 m;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) m(i, k) = r[3 * i + k];
  }
  return RigidTransform(m, Vector3(t[0], t[1], t[2]));
}

}  // namespace detail

struct CameraRig {
  CameraModel depth;      // true intrinsics and pose (camera-from-world)
  CameraModel nir;
  FrameGraph graph;       // calibrated estimates: frames world, depth, nir
  double depth_fit_rms = 0.0;
  double nir_fit_rms = 0.0;
};

/// Cameras and frame-graph edges in the same INI dialect as experiment
/// configs; numbers use shortest round-trip formatting.
inline void save_rig(const std::filesystem::path& path, const CameraRig& rig) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  using io::format_double;
  auto camera = [&](const char* name, const CameraModel& c) {
    out << "[" << name << "]\nfx = " << format_double(c.fx) << "\nfy = " << format_double(c.fy)
        << "\ncx = " << format_double(c.cx) << "\ncy = " << format_double(c.cy) << "\nwidth = " << c.width
        << "\nheight = " << c.height << "\nrotation = " << detail::transform_rotation(c.pose)
        << "\ntranslation = " << detail::join_numbers(c.pose.translation().data(), 3) << "\n\n";
  };
  camera("depth_camera", rig.depth);
  camera("nir_camera", rig.nir);
  out << "[calibration]\ndepth_fit_rms = " << format_double(rig.depth_fit_rms)
      << "\nnir_fit_rms = " << format_double(rig.nir_fit_rms) << "\n";
  const auto& edges = rig.graph.edges();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    out << "\n[edge" << i << "]\nto = " << edges[i].to << "\nfrom = " << edges[i].from
        << "\nrotation = " << detail::transform_rotation(edges[i].to_from)
        << "\ntranslation = " << detail::join_numbers(edges[i].to_from.translation().data(), 3) << "\n";
  }
}

inline CameraRig load_rig(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kIo, "camera file not found: " + path.string());
  const auto tree = detail::read_ini_tree(path);
  CameraRig rig;
  try {
    auto camera = [&](const std::string& name) {
      const auto& s = tree.get_child(name);
      CameraModel c;
      c.fx = io::parse_double(s.get<std::string>("fx"));
      c.fy = io::parse_double(s.get<std::string>("fy"));
      c.cx = io::parse_double(s.get<std::string>("cx"));
      c.cy = io::parse_double(s.get<std::string>("cy"));
      c.width = s.get<int>("width");
      c.height = s.get<int>("height");
      c.pose = detail::parse_transform(s.get<std::string>("rotation"), s.get<std::string>("translation"), name);
      c.validate();
      return c;
    };
    rig.depth = camera("depth_camera");
    rig.nir = camera("nir_camera");
    rig.depth_fit_rms = io::parse_double(tree.get<std::string>("calibration.depth_fit_rms"));
    rig.nir_fit_rms = io::parse_double(tree.get<std::string>("calibration.nir_fit_rms"));
    for (std::size_t i = 0;; ++i) {
      const std::string name = "edge" + std::to_string(i);
      auto s = tree.get_child_optional(name);
      if (!s) break;
      rig.graph.add_edge(s->get<std::string>("to"), s->get<std::string>("from"),
                         detail::parse_transform(s->get<std::string>("rotation"), s->get<std::string>("translation"),
                                                 name));
    }
  } catch (const boost::property_tree::ptree_error& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
  return rig;
}

}  // namespace nirplan
