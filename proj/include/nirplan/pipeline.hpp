#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nirplan/calibration.hpp"
#include "nirplan/config.hpp"
#include "nirplan/error.hpp"
#include "nirplan/image_io.hpp"
#include "nirplan/metrics.hpp"
#include "nirplan/phantom.hpp"
#include "nirplan/planner.hpp"
#include "nirplan/ply_io.hpp"
#include "nirplan/segmentation.hpp"

namespace nirplan {

namespace fs = std::filesystem;

// NIR intensities are stored as round(value * 32) in 16 bits; healthy tissue
// at the highest bundled concentration (about 1100) stays well below 65535.
inline constexpr double kNirPgmScale = 32.0;

/// Fixed names of the files a run directory holds.
namespace artifacts {
inline constexpr const char* kSceneKidney = "scene_kidney.ply";
inline constexpr const char* kSceneTumor = "scene_tumor.ply";
inline constexpr const char* kSceneTable = "scene_table.ply";
inline constexpr const char* kSceneMeta = "scene.json";
inline constexpr const char* kCameras = "cameras.ini";
inline constexpr const char* kCloud = "cloud.ply";
inline constexpr const char* kNirPgm = "nir.pgm";
inline constexpr const char* kNirPng = "nir.png";
inline constexpr const char* kTruthMask = "truth_mask.pgm";
inline constexpr const char* kMask = "mask.pgm";
inline constexpr const char* kLabeledCloud = "labeled_cloud.ply";
inline constexpr const char* kPlannedCloud = "planned_cloud.ply";
inline constexpr const char* kSurface = "surface.ply";
inline constexpr const char* kPathCsv = "path.csv";
inline constexpr const char* kPathJson = "path.json";
inline constexpr const char* kEpsilonCsv = "epsilon.csv";
inline constexpr const char* kReport = "report.json";
}  // namespace artifacts

/// A failure inside one pipeline stage, with a hint for the user.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, ErrorCode code, const std::string& message, std::string hint)
      : std::runtime_error("stage '" + stage + "' failed: " + message + (hint.empty() ? "" : " (hint: " + hint + ")")),
        stage_(std::move(stage)),
        code_(code),
        hint_(std::move(hint)) {}

  const std::string& stage() const { return stage_; }
  ErrorCode code() const { return code_; }
  const std::string& hint() const { return hint_; }

 private:
  std::string stage_;
  ErrorCode code_;
  std::string hint_;
};

using LogFn = std::function<void(std::string_view)>;

struct RunOptions {
  bool overwrite = false;
  LogFn log;
};

/// Independent noise streams from one experiment seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace detail {

inline std::string remediation(ErrorCode code) {
  switch (code) {
    case ErrorCode::kValidation:
    case ErrorCode::kInvalidPhantom:
    case ErrorCode::kInvalidArgument: return "check the config values";
    case ErrorCode::kIo:
    case ErrorCode::kParse: return "run the earlier stages first or check the input file";
    case ErrorCode::kEmptyCloud: return "the camera does not see the phantom; check standoff and obliquity";
    case ErrorCode::kNoTumor: return "no tumor was segmented; check the mask or the dye settings";
    case ErrorCode::kNoHealthyTissue: return "no healthy tissue was segmented; check the mask or healthy_threshold";
    case ErrorCode::kReconstructionFailed: return "set planner.ball_radius explicitly";
    case ErrorCode::kMarginAtCloudBoundary:
      return "the margin band leaves the observed surface; reduce obliquity or move the camera";
    case ErrorCode::kFragmentedBoundary:
      return "the margin band is fragmented; try a larger planner.ball_radius";
    case ErrorCode::kFrameGraph: return "cameras.ini is inconsistent; rerun the render stage";
    case ErrorCode::kDimensionMismatch: return "the mask must match the NIR image size";
    default: return "";
  }
}

template <typename F>
auto run_stage(const std::string& stage, const RunOptions& opts, nlohmann::json* timings, F&& body) {
  if (opts.log) opts.log("stage " + stage);
  const auto start = std::chrono::steady_clock::now();
  auto record = [&] {
    if (timings) {
      (*timings)[stage] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };
  try {
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      record();
    } else {
      auto out = body();
      record();
      return out;
    }
  } catch (const Error& e) {
    throw PipelineError(stage, e.code(), e.what(), remediation(e.code()));
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(stage, ErrorCode::kIo, e.what(), "");
  }
}

inline void refuse_overwrite(const fs::path& file, bool overwrite) {
  if (!overwrite && fs::exists(file)) {
    throw Error(ErrorCode::kValidation, file.string() + " exists; pass --overwrite to replace it");
  }
}

inline void write_json(const fs::path& file, const nlohmann::json& j) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + file.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + file.string());
}

inline nlohmann::json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + file.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, file.string() + ": " + e.what());
  }
}

inline nlohmann::json vec_json(const Vector3& v) { return {v.x(), v.y(), v.z()}; }

inline Vector3 vec_from_json(const nlohmann::json& j) {
  return Vector3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

}  // namespace detail

// ---- Scene files -----------------------------------------------------------------

inline void write_scene(const fs::path& dir, const Scene& scene) {
  io::write_mesh_ply(dir / artifacts::kSceneKidney, scene.kidney, &scene.kidney_classes);
  io::write_mesh_ply(dir / artifacts::kSceneTumor, scene.tumor, &scene.tumor_classes);
  if (!scene.table.triangles.empty()) io::write_mesh_ply(dir / artifacts::kSceneTable, scene.table);
  nlohmann::json meta;
  meta["tumor_center"] = detail::vec_json(scene.tumor_center);
  meta["tumor_site"] = detail::vec_json(scene.tumor_site);
  meta["tumor_normal"] = detail::vec_json(scene.tumor_normal);
  meta["tumor_radius"] = scene.tumor_radius;
  meta["dye_concentration"] = scene.dye_concentration;
  meta["seed"] = scene.seed;
  meta["table"] = !scene.table.triangles.empty();
  detail::write_json(dir / artifacts::kSceneMeta, meta);
}

inline Scene read_scene(const fs::path& dir) {
  const auto meta = detail::read_json(dir / artifacts::kSceneMeta);
  Scene scene;
  try {
    scene.tumor_center = detail::vec_from_json(meta.at("tumor_center"));
    scene.tumor_site = detail::vec_from_json(meta.at("tumor_site"));
    scene.tumor_normal = detail::vec_from_json(meta.at("tumor_normal"));
    scene.tumor_radius = meta.at("tumor_radius").get<double>();
    scene.dye_concentration = meta.at("dye_concentration").get<double>();
    scene.seed = meta.at("seed").get<std::uint64_t>();
    if (meta.at("table").get<bool>()) scene.table = io::read_mesh_ply(dir / artifacts::kSceneTable);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, (dir / artifacts::kSceneMeta).string() + ": " + e.what());
  }
  scene.kidney = io::read_mesh_ply(dir / artifacts::kSceneKidney, &scene.kidney_classes);
  scene.tumor = io::read_mesh_ply(dir / artifacts::kSceneTumor, &scene.tumor_classes);
  if (scene.kidney_classes.size() != scene.kidney.vertices.size() ||
      scene.tumor_classes.size() != scene.tumor.vertices.size()) {
    throw Error(ErrorCode::kParse, "scene meshes lack per-vertex classes");
  }
  scene.tumor_points = scene.tumor.vertices;
  for (std::size_t i = 0; i < scene.kidney.vertices.size(); ++i) {
    if (scene.kidney_classes[i] == Label::kTumor) scene.tumor_points.push_back(scene.kidney.vertices[i]);
  }
  return scene;
}

// ---- Stages -----------------------------------------------------------------------
// Each stage reads its inputs from the run directory and writes its outputs
// there, so a standalone subcommand and a full run do the same work.

inline void stage_generate(const ExperimentConfig& cfg, const fs::path& dir, bool overwrite) {
  detail::refuse_overwrite(dir / artifacts::kSceneMeta, overwrite);
  fs::create_directories(dir);
  PhantomSpec spec = cfg.phantom;
  spec.seed = cfg.seed;
  write_scene(dir, generate_phantom(spec));
}

inline CameraModel depth_camera_for(const Scene& scene, const ExperimentConfig& cfg) {
  return camera_facing_tumor(scene, cfg.depth_camera.view);
}

inline CameraModel nir_camera_for(const CameraModel& depth, const ExperimentConfig& cfg) {
  return offset_camera(depth, cfg.nir_camera.baseline, cfg.nir_camera.width, cfg.nir_camera.height,
                       cfg.nir_camera.vfov_deg);
}

/// Board-based extrinsic calibration of both cameras against the world frame,
/// then the configured error on the NIR edge.
inline CameraRig calibrate_rig(const Scene& scene, const CameraModel& depth, const CameraModel& nir,
                               const ExperimentConfig& cfg) {
  const auto& c = cfg.calibration;
  const auto corners = checkerboard_corners(c.board_cols, c.board_rows, c.square, scene.tumor_site);
  std::mt19937_64 rng(derive_seed(cfg.seed, 3));
  const auto depth_fit = estimate_rigid_transform(observe_board(corners, depth.pose, c.corner_noise, rng));
  const auto nir_fit = estimate_rigid_transform(observe_board(corners, nir.pose, c.corner_noise, rng));
  CameraRig rig;
  rig.depth = depth;
  rig.nir = nir;
  rig.depth_fit_rms = depth_fit.rms;
  rig.nir_fit_rms = nir_fit.rms;
  RigidTransform nir_from_world = nir_fit.transform;
  if (c.rotation_error_deg > 0 || c.translation_error_mm > 0) {
    const Vector3 axis = Vector3(1.0, 2.0, 3.0).normalized();
    const Vector3 shift = Vector3(3.0, -2.0, 1.0).normalized() * c.translation_error_mm;
    nir_from_world = compose(RigidTransform::rotation(axis, deg2rad(c.rotation_error_deg), shift), nir_from_world);
  }
  rig.graph.add_edge("depth", "world", depth_fit.transform);
  rig.graph.add_edge("nir", "world", nir_from_world);
  return rig;
}

inline void stage_render(const ExperimentConfig& cfg, const fs::path& dir, bool overwrite) {
  for (const char* f : {artifacts::kCloud, artifacts::kNirPgm, artifacts::kNirPng, artifacts::kTruthMask}) {
    detail::refuse_overwrite(dir / f, overwrite);
  }
  const Scene scene = read_scene(dir);
  const CameraModel depth = depth_camera_for(scene, cfg);
  const CameraModel nir = nir_camera_for(depth, cfg);
  DepthRenderOptions ro;
  ro.depth_noise_std = cfg.depth_camera.depth_noise_std;
  ro.seed = derive_seed(cfg.seed, 1);
  ro.frame = "depth";
  const auto cloud = render_depth_cloud(scene, depth, ro);
  io::write_cloud_ply(dir / artifacts::kCloud, cloud, true);
  const auto img = render_nir_image(scene, nir, cfg.dye, derive_seed(cfg.seed, 2));
  io::write_pgm(dir / artifacts::kNirPgm, img, kNirPgmScale);
  io::write_png16(dir / artifacts::kNirPng, img, kNirPgmScale);
  io::write_mask_pgm(dir / artifacts::kTruthMask, render_truth_mask(scene, nir));
}

inline void stage_calibrate(const ExperimentConfig& cfg, const fs::path& dir, bool overwrite) {
  detail::refuse_overwrite(dir / artifacts::kCameras, overwrite);
  const Scene scene = read_scene(dir);
  const CameraModel depth = depth_camera_for(scene, cfg);
  save_rig(dir / artifacts::kCameras, calibrate_rig(scene, depth, nir_camera_for(depth, cfg), cfg));
}

inline void stage_segment(const ExperimentConfig& cfg, const fs::path& dir, bool overwrite) {
  detail::refuse_overwrite(dir / artifacts::kMask, overwrite);
  const auto img = io::read_pgm(dir / artifacts::kNirPgm, kNirPgmScale);
  SegmentationMask mask;
  if (!cfg.mask.empty()) {
    mask = io::read_mask_pgm(cfg.mask);
    if (mask.width != img.width || mask.height != img.height) {
      throw Error(ErrorCode::kDimensionMismatch, "external mask is " + std::to_string(mask.width) + "x" +
                                                     std::to_string(mask.height) + ", NIR image is " +
                                                     std::to_string(img.width) + "x" + std::to_string(img.height));
    }
  } else {
    mask = segment_nir(img, cfg.segmentation);
  }
  io::write_mask_pgm(dir / artifacts::kMask, mask);
}

inline void stage_label(const fs::path& dir, bool overwrite) {
  detail::refuse_overwrite(dir / artifacts::kLabeledCloud, overwrite);
  const CameraRig rig = load_rig(dir / artifacts::kCameras);
  const auto cloud = io::read_cloud_ply(dir / artifacts::kCloud, "depth");
  const auto mask = io::read_mask_pgm(dir / artifacts::kMask);
  const auto projections = map_cloud_to_image(cloud, rig.graph, rig.nir, "nir");
  io::write_cloud_ply(dir / artifacts::kLabeledCloud, label_cloud(cloud, projections, mask));
}

inline void stage_plan(const ExperimentConfig& cfg, const fs::path& dir, bool overwrite) {
  for (const char* f : {artifacts::kPlannedCloud, artifacts::kSurface, artifacts::kPathCsv, artifacts::kPathJson}) {
    detail::refuse_overwrite(dir / f, overwrite);
  }
  const auto cloud = io::read_cloud_ply(dir / artifacts::kLabeledCloud, "depth");
  PlannerOptions po;
  po.margin = cfg.planner.margin;
  po.speed = cfg.planner.speed;
  po.max_step = cfg.planner.max_step;
  po.ball_radius = cfg.planner.ball_radius;
  po.viewpoint = Point3::Zero();  // the depth camera center in its own frame
  const auto plan = plan_incision(cloud, po);
  io::write_cloud_ply(dir / artifacts::kPlannedCloud, plan.cloud);
  io::write_mesh_ply(dir / artifacts::kSurface, plan.surface.mesh, &plan.vertex_labels);
  write_path_csv(dir / artifacts::kPathCsv, plan.path);
  auto j = path_to_json(plan.path, po.margin, 1 + plan.loop.others.size());
  j["ball_radius_mm"] = plan.surface.radius;
  j["loop_vertices"] = plan.loop.loop.size();
  j["candidate_vertices"] = plan.loop.candidate_count;
  j["filled_holes"] = plan.loop.filled_holes;
  j["margin_points"] = plan.margins.indices.size();
  detail::write_json(dir / artifacts::kPathJson, j);
}

/// Ground-truth comparison of everything the run produced. Returns the
/// "metrics" object of the report and writes the per-point epsilon export.
inline nlohmann::json stage_evaluate(const ExperimentConfig& cfg, const fs::path& dir, bool overwrite) {
  detail::refuse_overwrite(dir / artifacts::kEpsilonCsv, overwrite);
  const Scene scene = read_scene(dir);
  const CameraRig rig = load_rig(dir / artifacts::kCameras);
  nlohmann::json m;

  // 2D segmentation against the renderer's truth for the NIR view.
  const auto mask = io::read_mask_pgm(dir / artifacts::kMask);
  const auto truth_mask = io::read_mask_pgm(dir / artifacts::kTruthMask);
  const auto d2 = dsc_2d(mask, truth_mask);
  m["dsc_2d"] = {{"background", d2.per_class[0]},
                 {"healthy", d2.per_class[1]},
                 {"tumor", d2.per_class[2]},
                 {"weighted", d2.weighted_mean}};

  // NIR signal, measured on the stored image over the true regions.
  const auto img = io::read_pgm(dir / artifacts::kNirPgm, kNirPgmScale);
  m["sbr"] = sbr(img, pixels_of(truth_mask, Label::kHealthy), pixels_of(truth_mask, Label::kBackground));
  m["model_sbr"] = cfg.dye.model_sbr(scene.dye_concentration);

  // 3D labels after fusion.
  const auto labeled = io::read_cloud_ply(dir / artifacts::kLabeledCloud, "depth");
  if (!labeled.truth) throw Error(ErrorCode::kParse, "labeled cloud carries no ground truth");
  const auto d3 = dsc_3d_by_class(labeled.points, labeled.labels, labeled.points, *labeled.truth,
                                  cfg.evaluation.dsc_threshold);
  m["dsc_3d"] = {{"background", d3.per_class[0]},
                 {"healthy", d3.per_class[1]},
                 {"tumor", d3.per_class[2]},
                 {"weighted", d3.weighted_mean}};
  std::vector<Point3> predicted_tumor, true_tumor;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (labeled.labels[i] == Label::kTumor) predicted_tumor.push_back(labeled.points[i]);
    if ((*labeled.truth)[i] == Label::kTumor) true_tumor.push_back(labeled.points[i]);
  }
  if (!predicted_tumor.empty() && !true_tumor.empty()) {
    m["hausdorff_mm"] = hausdorff(predicted_tumor, true_tumor);
  } else {
    m["hausdorff_mm"] = nullptr;
  }

  // Planned path against the full (partly hidden) tumor.
  const auto path = read_path_csv(dir / artifacts::kPathCsv);
  const auto path_json = detail::read_json(dir / artifacts::kPathJson);
  const RigidTransform depth_from_world = rig.depth.pose;
  std::vector<Point3> tumor_in_depth;
  tumor_in_depth.reserve(scene.tumor_points.size());
  for (const auto& p : scene.tumor_points) tumor_in_depth.push_back(depth_from_world.apply(p));
  const auto eps = margin_error(path.positions, tumor_in_depth, cfg.planner.margin, cfg.evaluation.tool_offset);
  const auto planned = margin_error(path.positions, tumor_in_depth, cfg.planner.margin, 0.0);
  m["epsilon"] = {{"mean_mm", eps.mean},
                  {"std_mm", eps.stddev},
                  {"mean_abs_mm", eps.mean_abs},
                  {"tool_offset_mm", eps.tool_offset},
                  {"margin_mm", eps.margin},
                  {"points", eps.errors.size()}};
  m["planned_distance_error"] = {{"mean_mm", planned.mean}, {"std_mm", planned.stddev},
                                 {"mean_abs_mm", planned.mean_abs}};
  m["planner"] = {{"loop_count", path_json.at("loop_count")},
                  {"perimeter_mm", path.perimeter},
                  {"speed_mm_s", path.speed},
                  {"estimated_time_s", path.total_time()},
                  {"path_points", path.size()},
                  {"ball_radius_mm", path_json.at("ball_radius_mm")}};
  m["calibration"] = {{"depth_fit_rms_mm", rig.depth_fit_rms}, {"nir_fit_rms_mm", rig.nir_fit_rms}};

  std::ofstream out(dir / artifacts::kEpsilonCsv, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + (dir / artifacts::kEpsilonCsv).string());
  out << "index,t,x,y,z,distance_mm,epsilon_mm\n";
  for (std::size_t i = 0; i < eps.errors.size(); ++i) {
    const auto& p = path.positions[i];
    out << i << ',' << io::format_double(path.times[i]) << ',' << io::format_double(p.x()) << ','
        << io::format_double(p.y()) << ',' << io::format_double(p.z()) << ','
        << io::format_double(planned.errors[i] + cfg.planner.margin) << ',' << io::format_double(eps.errors[i])
        << '\n';
  }
  return m;
}

// ---- Full run and batch --------------------------------------------------------------

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"generate", "render", "calibrate", "segment", "label", "plan",
                                              "evaluate"};
  return names;
}

inline nlohmann::json artifact_list(const fs::path& dir) {
  nlohmann::json files = nlohmann::json::array();
  for (const char* f : {artifacts::kSceneKidney, artifacts::kSceneTumor, artifacts::kSceneTable, artifacts::kSceneMeta,
                        artifacts::kCameras, artifacts::kCloud, artifacts::kNirPgm, artifacts::kNirPng,
                        artifacts::kTruthMask, artifacts::kMask, artifacts::kLabeledCloud, artifacts::kPlannedCloud,
                        artifacts::kSurface, artifacts::kPathCsv, artifacts::kPathJson, artifacts::kEpsilonCsv,
                        artifacts::kReport}) {
    if (fs::exists(dir / f) || std::string_view(f) == artifacts::kReport) files.push_back(f);
  }
  return files;
}

/// The report minus its timing fields; two runs of one config agree on this
/// byte for byte.
inline nlohmann::json without_timings(nlohmann::json report) {
  report.erase("timings");
  return report;
}

/// Validates, refuses to clobber an existing run unless told to, then runs
/// every stage in order. Partial outputs stay on disk when a stage fails.
inline nlohmann::json run_pipeline(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  const fs::path dir = cfg.output_directory;
  if (!opts.overwrite && fs::exists(dir) && !fs::is_empty(dir)) {
    throw Error(ErrorCode::kValidation,
                "output directory " + dir.string() + " is not empty; pass --overwrite or choose another --out");
  }
  fs::create_directories(dir);
  nlohmann::json timings = nlohmann::json::object();
  const bool ow = true;  // the directory check above already guarded existing outputs
  detail::run_stage("generate", opts, &timings, [&] { stage_generate(cfg, dir, ow); });
  detail::run_stage("render", opts, &timings, [&] { stage_render(cfg, dir, ow); });
  detail::run_stage("calibrate", opts, &timings, [&] { stage_calibrate(cfg, dir, ow); });
  detail::run_stage("segment", opts, &timings, [&] { stage_segment(cfg, dir, ow); });
  detail::run_stage("label", opts, &timings, [&] { stage_label(dir, ow); });
  detail::run_stage("plan", opts, &timings, [&] { stage_plan(cfg, dir, ow); });
  auto metrics = detail::run_stage("evaluate", opts, &timings, [&] { return stage_evaluate(cfg, dir, ow); });

  nlohmann::json report;
  report["run_id"] = cfg.name;
  report["seed"] = cfg.seed;
  auto echo = config_to_json(cfg);
  echo.erase("output");  // keeps reports comparable across output locations
  if (!cfg.mask.empty()) echo["segmentation"]["mask"] = fs::path(cfg.mask).filename().string();
  report["config"] = echo;
  report["metrics"] = metrics;
  report["artifacts"] = artifact_list(dir);
  report["timings"] = timings;
  detail::write_json(dir / artifacts::kReport, report);
  return report;
}

struct BatchRow {
  std::string run_id;
  bool ok = false;
  std::string error;
  nlohmann::json report;
};

struct BatchResult {
  std::vector<BatchRow> rows;
  std::size_t failures() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += !r.ok;
    return n;
  }
};

/// Runs each config into `root/<config name>` and writes summary.csv and
/// epsilon_points.csv under `root`. A failing run is recorded and the batch
/// moves on. Config files that do not load count as failed runs.
inline BatchResult run_batch(const std::vector<fs::path>& config_files, const fs::path& root,
                             const RunOptions& opts = {}, std::optional<std::uint64_t> seed = std::nullopt,
                             std::function<void(ExperimentConfig&)> adjust = {}) {
  if (config_files.empty()) throw Error(ErrorCode::kValidation, "batch needs at least one config");
  if (!opts.overwrite) {
    for (const char* f : {"summary.csv", "epsilon_points.csv"}) detail::refuse_overwrite(root / f, false);
  }
  fs::create_directories(root);
  BatchResult result;
  for (const auto& file : config_files) {
    BatchRow row;
    row.run_id = file.stem().string();
    try {
      auto cfg = load_config(file);
      cfg.name = row.run_id;
      if (seed) cfg.seed = *seed;
      if (adjust) adjust(cfg);
      cfg.output_directory = (root / row.run_id).string();
      if (opts.log) opts.log("run " + row.run_id);
      row.report = run_pipeline(cfg, opts);
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
      if (opts.log) opts.log("run " + row.run_id + " failed: " + row.error);
    }
    result.rows.push_back(std::move(row));
  }

  auto number = [](const nlohmann::json& j) {
    return j.is_number() ? io::format_double(j.get<double>()) : std::string();
  };
  auto csv_field = [](std::string s) {
    for (auto& c : s) {
      if (c == '\n' || c == '\r') c = ' ';
    }
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  std::ofstream summary(root / "summary.csv", std::ios::binary);
  summary << "run_id,status,hausdorff_mm,dsc_2d,dsc_3d,mean_abs_epsilon_mm,time_estimate_s,error\n";
  std::ofstream points(root / "epsilon_points.csv", std::ios::binary);
  points << "run_id,index,t,epsilon_mm\n";
  for (const auto& row : result.rows) {
    summary << csv_field(row.run_id) << ',' << (row.ok ? "ok" : "failed");
    if (row.ok) {
      const auto& m = row.report.at("metrics");
      summary << ',' << number(m.at("hausdorff_mm")) << ',' << number(m.at("dsc_2d").at("weighted")) << ','
              << number(m.at("dsc_3d").at("weighted")) << ',' << number(m.at("epsilon").at("mean_abs_mm")) << ','
              << number(m.at("planner").at("estimated_time_s")) << ",\n";
      std::ifstream eps(root / row.run_id / artifacts::kEpsilonCsv);
      std::string line;
      std::getline(eps, line);
      while (std::getline(eps, line)) {
        // index,t,x,y,z,distance,epsilon -> run_id,index,t,epsilon
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
        if (f.size() == 7) points << csv_field(row.run_id) << ',' << f[0] << ',' << f[1] << ',' << f[6] << '\n';
      }
    } else {
      summary << ",,,,," << csv_field(row.error) << '\n';
    }
  }
  return result;
}

}  // namespace nirplan
