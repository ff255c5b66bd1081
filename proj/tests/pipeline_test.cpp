#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "nirplan/pipeline.hpp"

using namespace nirplan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "nirplan_pipeline_test" / name;
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

// Smaller images keep the end-to-end tests quick.
ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig c;
  c.name = "small";
  c.seed = 3;
  c.depth_camera.view.width = 320;
  c.depth_camera.view.height = 240;
  c.depth_camera.view.standoff = 250;
  c.nir_camera.width = 320;
  c.nir_camera.height = 240;
  c.segmentation.min_tumor_area = 10;
  c.output_directory = out.string();
  return c;
}

int exit_code_of(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Pipeline, MarginZeroFailsValidationBeforeAnyStage) {
  const auto out = scratch("margin0");
  auto c = small_config(out);
  c.planner.margin = 0;
  try {
    run_pipeline(c);
    FAIL() << "margin 0 accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidation);
  }
  EXPECT_FALSE(fs::exists(out));
}

TEST(Pipeline, RunsAreDeterministicModuloTimings) {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  const auto ra = run_pipeline(small_config(a));
  const auto rb = run_pipeline(small_config(b));
  EXPECT_EQ(without_timings(ra).dump(), without_timings(rb).dump());
  EXPECT_TRUE(ra.contains("timings"));
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    if (name == artifacts::kReport) continue;
    EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
  }
  // The report on disk matches the returned one.
  EXPECT_EQ(without_timings(nlohmann::json::parse(slurp(a / artifacts::kReport))).dump(),
            without_timings(ra).dump());
}

TEST(Pipeline, RefusesToOverwriteWithoutFlag) {
  const auto out = scratch("overwrite");
  const auto c = small_config(out);
  run_pipeline(c);
  const auto before = slurp(out / artifacts::kPathCsv);
  EXPECT_THROW(run_pipeline(c), Error);
  RunOptions o;
  o.overwrite = true;
  EXPECT_NO_THROW(run_pipeline(c, o));
  EXPECT_EQ(slurp(out / artifacts::kPathCsv), before);

  // Standalone stages guard their own outputs too.
  EXPECT_THROW(stage_plan(c, out, false), Error);
}

TEST(Pipeline, ReportStatisticsRecomputeFromExports) {
  const auto out = scratch("recompute");
  const auto c = small_config(out);
  const auto report = run_pipeline(c);
  std::ifstream in(out / artifacts::kEpsilonCsv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "index,t,x,y,z,distance_mm,epsilon_mm");
  std::vector<double> eps;
  while (std::getline(in, line)) {
    const auto comma = line.rfind(',');
    eps.push_back(std::stod(line.substr(comma + 1)));
  }
  ASSERT_FALSE(eps.empty());
  double s = 0, sa = 0;
  for (double e : eps) {
    s += e;
    sa += std::abs(e);
  }
  const auto& m = report.at("metrics").at("epsilon");
  EXPECT_EQ(m.at("points").get<std::size_t>(), eps.size());
  EXPECT_NEAR(m.at("mean_mm").get<double>(), s / eps.size(), 1e-9);
  EXPECT_NEAR(m.at("mean_abs_mm").get<double>(), sa / eps.size(), 1e-9);

  const auto path = read_path_csv(out / artifacts::kPathCsv);
  EXPECT_NEAR(report.at("metrics").at("planner").at("estimated_time_s").get<double>(), path.total_time(), 1e-9);
}

TEST(Pipeline, StageErrorsNameTheStageAndKeepPartialOutputs) {
  const auto out = scratch("stage_error");
  auto c = small_config(out);
  // An external mask with no tumor: everything up to planning succeeds.
  const auto mask_file = scratch("healthy_mask.pgm");
  io::write_mask_pgm(mask_file, SegmentationMask(320, 240, Label::kHealthy));
  c.mask = mask_file.string();
  try {
    run_pipeline(c);
    FAIL() << "planning without tumor succeeded";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "plan");
    EXPECT_EQ(e.code(), ErrorCode::kNoTumor);
    EXPECT_FALSE(e.hint().empty());
  }
  EXPECT_TRUE(fs::exists(out / artifacts::kLabeledCloud));
  EXPECT_FALSE(fs::exists(out / artifacts::kPathCsv));
}

TEST(Pipeline, ExternalMaskMustMatchImage) {
  const auto out = scratch("mask_size");
  auto c = small_config(out);
  const auto mask_file = scratch("small_mask.pgm");
  io::write_mask_pgm(mask_file, SegmentationMask(10, 10));
  c.mask = mask_file.string();
  try {
    run_pipeline(c);
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "segment");
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(Pipeline, ExternalTruthMaskReproducesBuiltInLabels) {
  const auto a = scratch("builtin");
  run_pipeline(small_config(a));
  const auto b = scratch("external");
  auto c = small_config(b);
  c.mask = (a / artifacts::kMask).string();
  run_pipeline(c);
  EXPECT_EQ(slurp(a / artifacts::kLabeledCloud), slurp(b / artifacts::kLabeledCloud));
}

TEST(Pipeline, StandaloneStagesMatchFullRun) {
  const auto full = scratch("full");
  run_pipeline(small_config(full));
  const auto staged = scratch("staged");
  const auto c = small_config(staged);
  stage_generate(c, staged, false);
  stage_render(c, staged, false);
  stage_calibrate(c, staged, false);
  stage_segment(c, staged, false);
  stage_label(staged, false);
  stage_plan(c, staged, false);
  stage_evaluate(c, staged, false);
  for (const char* f : {artifacts::kCloud, artifacts::kNirPgm, artifacts::kCameras, artifacts::kLabeledCloud,
                        artifacts::kSurface, artifacts::kPathCsv, artifacts::kEpsilonCsv}) {
    EXPECT_EQ(slurp(full / f), slurp(staged / f)) << f;
  }
}

TEST(Pipeline, ScenePlyReimport) {
  const auto out = scratch("scene");
  fs::create_directories(out);
  PhantomSpec spec;
  spec.vertex_density = 0.3;
  const Scene s = generate_phantom(spec);
  write_scene(out, s);
  const Scene back = read_scene(out);
  EXPECT_EQ(back.kidney.vertices, s.kidney.vertices);
  EXPECT_EQ(back.tumor.triangles, s.tumor.triangles);
  EXPECT_EQ(back.table.vertices, s.table.vertices);
  EXPECT_EQ(back.tumor_points, s.tumor_points);
  EXPECT_EQ(back.tumor_center, s.tumor_center);
  EXPECT_EQ(back.tumor_normal, s.tumor_normal);
}

TEST(Batch, OneInvalidConfigIsRecordedAndOthersRun) {
  const auto root = scratch("batch");
  const auto cfgdir = scratch("batch_configs");
  fs::create_directories(cfgdir);
  std::vector<fs::path> files;
  for (int i = 0; i < 4; ++i) {
    auto c = small_config(root);
    c.seed = 10 + i;
    c.phantom.tumor_radius = 8.0 + 2.0 * i;
    if (i == 2) c.planner.margin = 0;
    const auto f = cfgdir / ("run" + std::to_string(i) + ".ini");
    save_config(f, c);
    files.push_back(f);
  }
  const auto result = run_batch(files, root);
  ASSERT_EQ(result.rows.size(), 4u);
  EXPECT_EQ(result.failures(), 1u);
  EXPECT_FALSE(result.rows[2].ok);
  EXPECT_NE(result.rows[2].error.find("margin"), std::string::npos);

  std::ifstream in(root / "summary.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "run_id,status,hausdorff_mm,dsc_2d,dsc_3d,mean_abs_epsilon_mm,time_estimate_s,error");
  EXPECT_EQ(lines[3].rfind("run2,failed", 0), 0u);
  EXPECT_EQ(lines[1].rfind("run0,ok,", 0), 0u);
  EXPECT_TRUE(fs::exists(root / "epsilon_points.csv"));

  EXPECT_THROW(run_batch({}, root), Error);
}

#ifdef NIRPLAN_CLI
TEST(Cli, ExitCodes) {
  const std::string cli = NIRPLAN_CLI;
  const auto cfgdir = scratch("cli_configs");
  fs::create_directories(cfgdir);
  auto good = small_config(scratch("cli_run"));
  save_config(cfgdir / "good.ini", good);
  auto bad = good;
  bad.planner.margin = 0;
  save_config(cfgdir / "bad.ini", bad);

  const auto run_out = scratch("cli_out");
  EXPECT_EQ(exit_code_of(cli + " run --config " + (cfgdir / "good.ini").string() + " --out " + run_out.string()), 0);
  // Existing output without --overwrite is a validation error.
  EXPECT_EQ(exit_code_of(cli + " run --config " + (cfgdir / "good.ini").string() + " --out " + run_out.string()), 1);
  EXPECT_EQ(exit_code_of(cli + " run --config " + (cfgdir / "bad.ini").string()), 1);
  EXPECT_EQ(exit_code_of(cli + " run --config " + (cfgdir / "good.ini").string() + " --margin 0"), 1);
  EXPECT_EQ(exit_code_of(cli + " batch"), 1);
  EXPECT_EQ(exit_code_of(cli + " frobnicate"), 1);
  // Planning in an empty directory has nothing to read.
  EXPECT_EQ(exit_code_of(cli + " plan --out " + scratch("cli_empty").string()), 2);

  const auto batch_out = scratch("cli_batch");
  EXPECT_EQ(exit_code_of(cli + " batch " + (cfgdir / "good.ini").string() + " " + (cfgdir / "bad.ini").string() +
                         " --out " + batch_out.string()),
            3);

  // Environment override for the output directory; the flag still wins.
  const auto env_out = scratch("cli_env");
  EXPECT_EQ(exit_code_of("NIRPLAN_OUT=" + env_out.string() + " " + cli + " generate --config " +
                         (cfgdir / "good.ini").string()),
            0);
  EXPECT_TRUE(fs::exists(env_out / artifacts::kSceneMeta));
}
#endif
