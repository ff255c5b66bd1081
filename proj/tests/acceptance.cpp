// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nirplan/pipeline.hpp"
#include "oracles.hpp"

using namespace nirplan;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

fs::path workdir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "nirplan_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool close_rel(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)}); }

// Zero calibration error and no sensor noise.
ExperimentConfig clean_config() {
  ExperimentConfig c;
  c.calibration.corner_noise = 0;
  c.dye.noise_std = 0;
  c.depth_camera.depth_noise_std = 0;
  c.segmentation.min_tumor_area = 20;
  return c;
}

// ---- AC1 -----------------------------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<std::size_t> size(1, 300);
  int mismatches = 0, instances = 0;
  std::string first;
  auto miss = [&](const std::string& what) {
    if (mismatches++ == 0) first = what;
  };

  for (int k = 0; k < 100; ++k, ++instances) {
    const auto a = oracle::random_points(rng, size(rng), 50.0);
    const auto b = oracle::random_points(rng, size(rng), 50.0);
    const double d_ab = oracle::directed_hausdorff(a, b), d_ba = oracle::directed_hausdorff(b, a);
    if (!close_rel(directed_hausdorff(a, b), d_ab, 1e-9)) miss("directed Hausdorff");
    if (!close_rel(hausdorff(a, b), std::max(d_ab, d_ba), 1e-9)) miss("Hausdorff");
  }

  std::uniform_int_distribution<int> cls(0, 2), dim(1, 17);
  for (int k = 0; k < 100; ++k, ++instances) {
    const int w = dim(rng), h = dim(rng);
    SegmentationMask p(w, h), r(w, h);
    for (auto& c : p.classes) c = static_cast<Label>(cls(rng));
    for (std::size_t i = 0; i < r.classes.size(); ++i) {
      r.classes[i] = rng() % 4 == 0 ? static_cast<Label>(cls(rng)) : p.classes[i];
    }
    const auto got = dsc_2d(p, r);
    for (int c = 0; c < 3; ++c) {
      std::size_t both = 0, np = 0, nr = 0;
      for (std::size_t i = 0; i < p.classes.size(); ++i) {
        const bool in_p = static_cast<int>(p.classes[i]) == c, in_r = static_cast<int>(r.classes[i]) == c;
        both += in_p && in_r;
        np += in_p;
        nr += in_r;
      }
      const double want = np + nr == 0 ? 1.0 : 2.0 * both / static_cast<double>(np + nr);
      if (got.per_class[c] != want) miss("2D DSC");
    }
  }

  for (int k = 0; k < 100; ++k, ++instances) {
    // Dense 1 mm cubes so the 0.1 mm threshold yields contested matches.
    const auto x = oracle::random_points(rng, size(rng) % 200 + 1, 0.5);
    const auto y = oracle::random_points(rng, size(rng) % 200 + 1, 0.5);
    const std::size_t m = oracle::max_matching(x, y, 0.1);
    const double want = 2.0 * m / static_cast<double>(x.size() + y.size());
    if (dsc_3d(x, y, 0.1) != want || matched_pairs(x, y, 0.1) != m) miss("3D DSC");
  }

  std::uniform_real_distribution<double> intensity(0.0, 1000.0);
  for (int k = 0; k < 100; ++k, ++instances) {
    const int w = dim(rng) + 2, h = dim(rng) + 2;
    IntensityImage img(w, h);
    for (auto& v : img.values) v = intensity(rng);
    // Pixel 0 is always target and the last pixel always background; the
    // rest are split at random, some left out of both regions.
    std::vector<std::size_t> target{0}, background;
    for (std::size_t i = 1; i + 1 < img.pixel_count(); ++i) {
      const auto r = rng() % 3;
      if (r == 0) target.push_back(i);
      if (r == 1) background.push_back(i);
    }
    background.push_back(img.pixel_count() - 1);
    double st = 0, sb = 0;
    for (auto i : target) st += img.values[i];
    for (auto i : background) sb += img.values[i];
    const double want = (st / target.size()) / (sb / background.size());
    if (!close_rel(sbr(img, target, background), want, 1e-9)) miss("SBR");
  }

  std::uniform_real_distribution<double> offset(0.0, 1.0), margin(1.0, 10.0);
  for (int k = 0; k < 100; ++k, ++instances) {
    const auto path = oracle::random_points(rng, size(rng), 30.0);
    const auto tumor = oracle::random_points(rng, size(rng), 10.0);
    const double off = offset(rng), mg = margin(rng);
    const auto got = margin_error(path, tumor, mg, off);
    double sum = 0;
    bool ok = got.errors.size() == path.size();
    for (std::size_t i = 0; ok && i < path.size(); ++i) {
      const double e = oracle::nearest(path[i], tumor) + off - mg;
      ok = close_rel(got.errors[i], e, 1e-9);
      sum += e;
    }
    if (!ok || !close_rel(got.mean, sum / path.size(), 1e-9)) miss("margin epsilon");
  }
  return {mismatches == 0, std::to_string(instances) + " instances over Hausdorff, 2D DSC, 3D DSC, SBR, epsilon; " +
                               std::to_string(mismatches) + " mismatches" + (first.empty() ? "" : " (first: " + first + ")")};
}

// ---- AC2 -----------------------------------------------------------------------

double rendered_sbr(const Scene& scene, const CameraModel& cam, const DyeModel& dye, std::uint64_t seed) {
  const auto img = render_nir_image(scene, cam, dye, seed);
  const auto truth = render_truth_mask(scene, cam);
  return sbr(img, pixels_of(truth, Label::kHealthy), pixels_of(truth, Label::kBackground));
}

Outcome sbr_operating_point() {
  const double target = 6.1142;
  ExperimentConfig c = clean_config();
  c.depth_camera.view.width = 320;
  c.depth_camera.view.height = 240;
  DyeModel dye = c.dye;
  c.phantom.dye_concentration = dye.concentration_for_sbr(target);
  const Scene scene = generate_phantom(c.phantom);
  const CameraModel cam = camera_facing_tumor(scene, c.depth_camera.view);

  dye.noise_std = 0;
  const double clean = rendered_sbr(scene, cam, dye, 1);
  const bool ok_clean = std::abs(clean - target) <= 1e-6;

  dye.noise_std = 0.02;
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) worst = std::max(worst, std::abs(rendered_sbr(scene, cam, dye, seed) - target));
  const bool ok_noisy = worst <= 0.05;

  dye.noise_std = 0;
  std::vector<double> xs{0.0020, 0.0038, 0.0097, 0.0150, 0.0204}, ys;
  for (double conc : xs) {
    PhantomSpec spec = c.phantom;
    spec.dye_concentration = conc;
    const Scene s = generate_phantom(spec);
    ys.push_back(rendered_sbr(s, camera_facing_tumor(s, c.depth_camera.view), dye, 1));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / n;
    my += ys[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double r2 = sxy * sxy / (sxx * syy);
  return {ok_clean && ok_noisy && r2 > 0.999,
          "zero-noise SBR " + fmt(clean, 9) + " (target 6.1142, |diff| " + fmt(std::abs(clean - target), 9) +
              "); 2% noise worst |diff| over 10 seeds " + fmt(worst, 4) + "; R^2 over 5 concentrations " +
              fmt(r2, 6) + ", slope " + fmt(sxy / sxx, 2) + " per w/w"};
}

// ---- AC3 -----------------------------------------------------------------------

Outcome margin_rule() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> size(10, 2000);
  int mismatches = 0;
  std::size_t largest = 0;
  for (int k = 0; k < 50; ++k) {
    LabeledPointCloud c;
    const std::size_t n = size(rng);
    largest = std::max(largest, n);
    if (k % 2 == 0) {
      c.points = oracle::random_points(rng, n, 20.0);
    } else {
      // Integer lattice: many pairs sit at exactly the margin (3-4-5 triangles).
      std::uniform_int_distribution<int> coord(-12, 12);
      for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(coord(rng), coord(rng), coord(rng) % 3);
    }
    std::uniform_int_distribution<int> lab(0, 9);
    for (std::size_t i = 0; i < n; ++i) {
      const int r = lab(rng);
      c.labels.push_back(r == 0 ? Label::kTumor : r == 1 ? Label::kBackground : Label::kHealthy);
    }
    c.labels[0] = Label::kTumor;
    c.labels[1] = Label::kHealthy;
    const auto want = oracle::margin_set(c, 5.0);
    const auto got = find_margin(c, 5.0);
    if (got.indices != want) ++mismatches;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const bool in = std::binary_search(want.begin(), want.end(), i);
      if (in != (c.labels[i] == Label::kMargin)) {
        ++mismatches;
        break;
      }
    }
  }
  return {mismatches == 0, "50 clouds (n up to " + std::to_string(largest) + "), " + std::to_string(mismatches) +
                               " differ from the brute-force margin set"};
}

// ---- AC4 -----------------------------------------------------------------------

Outcome bpa_sphere() {
  const std::size_t n = 2000;
  const double radius = 50.0;
  std::vector<Point3> pts;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(1.0 - z * z);
    pts.emplace_back(radius * r * std::cos(golden * i), radius * r * std::sin(golden * i), radius * z);
  }
  BallPivotingOptions o;
  o.radius = 2.0 * mean_spacing(pts);
  const auto res = reconstruct_surface(pts, o);
  const auto& m = res.mesh;
  std::size_t bad_balls = 0;
  for (const auto& t : m.triangles) {
    Point3 c;
    if (!oracle::ball_center(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]], res.radius, c)) {
      ++bad_balls;
      continue;
    }
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
      if (i == t[0] || i == t[1] || i == t[2]) continue;
      if ((m.vertices[i] - c).norm() < res.radius * (1 - 1e-9)) {
        ++bad_balls;
        break;
      }
    }
  }
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> uses;
  for (const auto& t : m.triangles) {
    for (int k = 0; k < 3; ++k) ++uses[{std::min(t[k], t[(k + 1) % 3]), std::max(t[k], t[(k + 1) % 3])}];
  }
  std::size_t boundary = 0, non_manifold = 0;
  for (const auto& [e, u] : uses) {
    boundary += u == 1;
    non_manifold += u > 2;
  }
  return {bad_balls == 0 && boundary == 0 && non_manifold == 0 && !m.triangles.empty(),
          std::to_string(m.triangles.size()) + " triangles, " + std::to_string(bad_balls) +
              " fail the empty-ball test, " + std::to_string(boundary) + " boundary edges, " +
              std::to_string(non_manifold) + " non-manifold edges, " + std::to_string(res.used_vertices) + "/" +
              std::to_string(n) + " vertices used"};
}

// ---- AC5 -----------------------------------------------------------------------

Outcome planning_accuracy() {
  ExperimentConfig c = clean_config();
  c.name = "top_down";
  c.phantom.tumor_radius = 15.0;
  c.output_directory = workdir("ac5_top_down").string();
  const auto report = run_pipeline(c);
  const auto& pe = report.at("metrics").at("planned_distance_error");
  const double mean_abs = pe.at("mean_abs_mm").get<double>();
  bool ok = mean_abs <= 1.5;
  std::string detail = "top-down 30 mm: mean |d - 5| = " + fmt(mean_abs, 3) + " mm (mean signed " +
                       fmt(pe.at("mean_mm").get<double>(), 3) + " mm); bundled times:";

  std::vector<fs::path> files;
  for (int i = 1; i <= 4; ++i) files.push_back(fs::path(NIRPLAN_SOURCE_DIR) / "configs" / ("phantom" + std::to_string(i) + ".ini"));
  const auto batch = run_batch(files, workdir("ac5_bundled"));
  for (const auto& row : batch.rows) {
    if (!row.ok) {
      ok = false;
      detail += " " + row.run_id + " failed (" + row.error + ")";
      continue;
    }
    const double t = row.report.at("metrics").at("planner").at("estimated_time_s").get<double>();
    ok = ok && t >= 40 && t <= 120;
    detail += " " + row.run_id + "=" + fmt(t, 1) + "s";
  }
  return {ok, detail};
}

// ---- AC6 -----------------------------------------------------------------------

Outcome single_view_bias() {
  std::mt19937_64 rng(6006);
  std::uniform_real_distribution<double> obliquity(30.0, 40.0), azimuth(0.0, 360.0), protrusion(0.4, 0.8),
      diameter(17.0, 35.0), tumor_az(-180.0, 180.0), tumor_el(70.0, 90.0);
  int n = 0, positive = 0, positive_with_offset = 0, failed = 0;
  double mean_of_means = 0, mean_with_offset = 0;
  std::string failures;
  for (int k = 0; k < 20; ++k) {
    ExperimentConfig c = clean_config();
    c.seed = 100 + k;
    c.name = "oblique" + std::to_string(k);
    c.phantom.tumor_radius = diameter(rng) / 2;
    c.phantom.protrusion = protrusion(rng);
    c.phantom.tumor_azimuth_deg = tumor_az(rng);
    c.phantom.tumor_elevation_deg = tumor_el(rng);
    c.depth_camera.view.obliquity_deg = obliquity(rng);
    c.depth_camera.view.obliquity_azimuth_deg = azimuth(rng);
    c.output_directory = workdir("ac6_" + std::to_string(k)).string();
    try {
      const auto m = run_pipeline(c).at("metrics");
      const double mean = m.at("planned_distance_error").at("mean_mm").get<double>();
      ++n;
      positive += mean >= 0;
      mean_of_means += mean;
      const double with_offset = m.at("epsilon").at("mean_mm").get<double>();
      positive_with_offset += with_offset >= 0;
      mean_with_offset += with_offset;
    } catch (const std::exception& e) {
      ++failed;
      if (failures.empty()) failures = e.what();
    }
  }
  // One-sided sign test of H0: median >= 0, using the scenes that produced a path.
  double p = 0;
  for (int i = 0; i <= positive; ++i) {
    double term = 1;
    for (int j = 0; j < i; ++j) term *= static_cast<double>(n - j) / (j + 1);
    p += term * std::pow(0.5, n);
  }
  if (n > 0) {
    mean_of_means /= n;
    mean_with_offset /= n;
  }
  std::string detail = std::to_string(n) + " scenes planned, " + std::to_string(failed) + " failed; " +
                       std::to_string(positive) + " with mean signed error >= 0; sign-test p = " + fmt(p, 6) +
                       "; mean of scene means " + fmt(mean_of_means, 3) + " mm (" + fmt(mean_with_offset, 3) +
                       " mm with the 0.5 mm tool offset, " + std::to_string(positive_with_offset) + " scenes >= 0)";
  if (!failures.empty()) detail += "; first failure: " + failures;
  return {n == 20 && p < 0.05, detail};
}

// ---- AC7 -----------------------------------------------------------------------

Outcome fusion_degradation() {
  int below = 0, seeds = 0;
  double worst_perfect = 1.0, mean_2d = 0, mean_3d_err = 0;
  std::string failures;
  for (int k = 0; k < 10; ++k) {
    ExperimentConfig c = clean_config();
    c.seed = 700 + k;
    c.dye.noise_std = 0.02;
    c.name = "fusion" + std::to_string(k);
    c.output_directory = workdir("ac7_perfect_" + std::to_string(k)).string();
    try {
      const auto perfect = run_pipeline(c).at("metrics");
      worst_perfect = std::min(worst_perfect, perfect.at("dsc_3d").at("weighted").get<double>());
      c.calibration.rotation_error_deg = 1.0;
      c.calibration.translation_error_mm = 1.0;
      c.output_directory = workdir("ac7_error_" + std::to_string(k)).string();
      const auto degraded = run_pipeline(c).at("metrics");
      const double d2 = degraded.at("dsc_2d").at("weighted").get<double>();
      const double d3 = degraded.at("dsc_3d").at("weighted").get<double>();
      below += d3 < d2;
      mean_2d += d2 / 10;
      mean_3d_err += d3 / 10;
      ++seeds;
    } catch (const std::exception& e) {
      if (failures.empty()) failures = e.what();
    }
  }
  std::string detail = "perfect calibration: worst 3D DSC " + fmt(worst_perfect) + "; with 1 deg + 1 mm error: 3D < 2D in " +
                       std::to_string(below) + "/10 seeds (mean 2D " + fmt(mean_2d) + ", mean 3D " +
                       fmt(mean_3d_err) + ")";
  if (!failures.empty()) detail += "; failure: " + failures;
  return {seeds == 10 && worst_perfect >= 0.95 && below >= 9, detail};
}

// ---- AC8 -----------------------------------------------------------------------

Outcome determinism_and_round_trips() {
  ExperimentConfig c;
  c.seed = 42;
  c.name = "determinism";
  c.output_directory = workdir("ac8_a").string();
  const fs::path a = c.output_directory;
  const auto ra = run_pipeline(c);
  c.output_directory = workdir("ac8_b").string();
  const fs::path b = c.output_directory;
  const auto rb = run_pipeline(c);

  std::vector<std::string> differ;
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename().string();
    if (name == artifacts::kReport) continue;
    ++compared;
    if (slurp(entry.path()) != slurp(b / name)) differ.push_back(name);
  }
  if (without_timings(ra).dump() != without_timings(rb).dump()) differ.push_back("report (modulo timings)");

  // Re-import each file with its reader, write it again and compare bytes.
  std::vector<std::string> lossy;
  const auto tmp = workdir("ac8_rewrite");
  fs::create_directories(tmp);
  auto check = [&](const std::string& name, const std::function<void(const fs::path&, const fs::path&)>& rewrite) {
    try {
      rewrite(a / name, tmp / name);
      if (slurp(a / name) != slurp(tmp / name)) lossy.push_back(name);
    } catch (const std::exception& e) {
      lossy.push_back(name + " (" + e.what() + ")");
    }
  };
  check(artifacts::kCloud, [](auto& in, auto& out) { io::write_cloud_ply(out, io::read_cloud_ply(in, "depth"), true); });
  for (const char* f : {artifacts::kLabeledCloud, artifacts::kPlannedCloud}) {
    check(f, [](auto& in, auto& out) { io::write_cloud_ply(out, io::read_cloud_ply(in, "depth")); });
  }
  for (const char* f : {artifacts::kSceneKidney, artifacts::kSceneTumor, artifacts::kSceneTable, artifacts::kSurface}) {
    check(f, [](auto& in, auto& out) {
      std::vector<Label> classes;
      const auto mesh = io::read_mesh_ply(in, &classes);
      io::write_mesh_ply(out, mesh, classes.empty() ? nullptr : &classes);
    });
  }
  check(artifacts::kNirPgm, [](auto& in, auto& out) { io::write_pgm(out, io::read_pgm(in, kNirPgmScale), kNirPgmScale); });
  check(artifacts::kNirPng, [](auto& in, auto& out) {
    io::write_png16(out, io::read_png16(in, kNirPgmScale), kNirPgmScale);
  });
  for (const char* f : {artifacts::kMask, artifacts::kTruthMask}) {
    check(f, [](auto& in, auto& out) { io::write_mask_pgm(out, io::read_mask_pgm(in)); });
  }
  check(artifacts::kPathCsv, [](auto& in, auto& out) { write_path_csv(out, read_path_csv(in)); });
  check(artifacts::kCameras, [](auto& in, auto& out) { save_rig(out, load_rig(in)); });
  for (const char* f : {artifacts::kPathJson, artifacts::kSceneMeta, artifacts::kReport}) {
    check(f, [](auto& in, auto& out) { std::ofstream(out, std::ios::binary) << nlohmann::json::parse(slurp(in)).dump(2) << '\n'; });
  }
  check(artifacts::kEpsilonCsv, [](auto& in, auto& out) {
    std::ifstream src(in);
    std::ofstream dst(out, std::ios::binary);
    std::string line;
    std::getline(src, line);
    dst << line << '\n';
    while (std::getline(src, line)) {
      std::stringstream ss(line);
      std::string tok;
      std::getline(ss, tok, ',');
      dst << std::stoul(tok);
      while (std::getline(ss, tok, ',')) dst << ',' << io::format_double(io::parse_double(tok));
      dst << '\n';
    }
  });
  // Structured re-imports agree with each other.
  const auto path_csv = read_path_csv(a / artifacts::kPathCsv);
  const auto path_json = path_from_json(nlohmann::json::parse(slurp(a / artifacts::kPathJson)));
  if (path_csv.positions != path_json.positions || path_csv.times != path_json.times) lossy.push_back("path csv vs json");
  const Scene scene = read_scene(a);
  if (scene.tumor_points.empty()) lossy.push_back("scene");

  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s.empty() ? std::string("none") : s;
  };
  return {differ.empty() && lossy.empty(), std::to_string(compared) + " files compared across two runs, differing: " +
                                                join(differ) + "; lossy re-imports: " + join(lossy)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1 metric oracle equivalence", metric_oracles},
      {"AC2 SBR operating point and linearity", sbr_operating_point},
      {"AC3 margin rule exactness", margin_rule},
      {"AC4 BPA validity on a sphere", bpa_sphere},
      {"AC5 end-to-end planning accuracy", planning_accuracy},
      {"AC6 single-view bias", single_view_bias},
      {"AC7 segmentation fusion degradation", fusion_degradation},
      {"AC8 determinism and round trips", determinism_and_round_trips},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt(secs, 1) << " s]"
              << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
