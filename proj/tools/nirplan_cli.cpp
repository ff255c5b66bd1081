// nirplan: synthetic NIR-guided incision planning from the command line.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "nirplan/pipeline.hpp"

namespace {

using namespace nirplan;

enum Exit { kOk = 0, kValidationExit = 1, kPipelineExit = 2, kPartialBatch = 3 };

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool overwrite = false;
  std::optional<double> margin;
  std::optional<double> speed;
  std::string mask;
  std::string log_level;
};

void add_common(CLI::App* cmd, Flags& f, bool config_required) {
  auto* c = cmd->add_option("--config", f.config, "experiment config (INI)");
  if (config_required) c->required();
  cmd->add_option("--seed", f.seed, "override the config seed");
  cmd->add_option("--out", f.out, "run directory (overrides NIRPLAN_OUT and the config)");
  cmd->add_flag("--overwrite", f.overwrite, "replace existing outputs");
  cmd->add_option("--margin", f.margin, "resection margin, mm");
  cmd->add_option("--speed", f.speed, "tool speed, mm/s");
  cmd->add_option("--mask", f.mask, "external segmentation mask (PGM with classes 0/1/2)");
  cmd->add_option("--log-level", f.log_level, "trace, debug, info, warn, error, off");
}

std::string env(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

void setup_logging(const Flags& f) {
  std::string level = f.log_level.empty() ? env("NIRPLAN_LOG_LEVEL") : f.log_level;
  if (level.empty()) level = "info";
  static const std::vector<std::string> known{"trace", "debug", "info", "warn", "warning", "error", "critical", "off"};
  if (std::find(known.begin(), known.end(), level) == known.end()) {
    throw Error(ErrorCode::kValidation, "unknown log level '" + level + "'");
  }
  auto logger = spdlog::stderr_color_mt("nirplan");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level == "warning" ? "warn" : level));
}

// Precedence: command-line flag, then environment, then config file.
ExperimentConfig resolve(const Flags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (const auto out = env("NIRPLAN_OUT"); !out.empty()) cfg.output_directory = out;
  if (!f.out.empty()) cfg.output_directory = f.out;
  if (f.margin) cfg.planner.margin = *f.margin;
  if (f.speed) cfg.planner.speed = *f.speed;
  if (!f.mask.empty()) cfg.mask = f.mask;
  cfg.phantom.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunOptions run_options(const Flags& f) {
  RunOptions o;
  o.overwrite = f.overwrite;
  o.log = [](std::string_view msg) { spdlog::info("{}", msg); };
  return o;
}

int report_error(const std::exception& e, int code) {
  spdlog::error("{}", e.what());
  return code;
}

void print_summary(const nlohmann::json& report) {
  const auto& m = report.at("metrics");
  std::cout << "run " << report.at("run_id").get<std::string>() << "\n"
            << "  2D DSC (weighted)     " << m.at("dsc_2d").at("weighted") << "\n"
            << "  3D DSC (weighted)     " << m.at("dsc_3d").at("weighted") << "\n"
            << "  tumor Hausdorff (mm)  " << m.at("hausdorff_mm") << "\n"
            << "  SBR                   " << m.at("sbr") << "\n"
            << "  mean epsilon (mm)     " << m.at("epsilon").at("mean_mm") << "\n"
            << "  perimeter (mm)        " << m.at("planner").at("perimeter_mm") << "\n"
            << "  estimated time (s)    " << m.at("planner").at("estimated_time_s") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic NIR-guided surgical incision planning"};
  app.require_subcommand(1);

  Flags flags;
  std::vector<std::string> batch_configs;

  auto* generate = app.add_subcommand("generate", "build the phantom scene");
  add_common(generate, flags, true);
  auto* render = app.add_subcommand("render", "render depth cloud and NIR image, calibrate the cameras");
  add_common(render, flags, false);
  auto* segment = app.add_subcommand("segment", "segment the NIR image and label the cloud");
  add_common(segment, flags, false);
  auto* plan = app.add_subcommand("plan", "find the margin, reconstruct the surface and plan the path");
  add_common(plan, flags, false);
  auto* evaluate = app.add_subcommand("evaluate", "compare the run against ground truth");
  add_common(evaluate, flags, false);
  auto* run = app.add_subcommand("run", "full pipeline");
  add_common(run, flags, true);
  auto* batch = app.add_subcommand("batch", "run several configs and summarize");
  add_common(batch, flags, false);
  batch->add_option("configs", batch_configs, "config files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidationExit;
  }

  try {
    setup_logging(flags);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kValidationExit;
  }

  try {
    if (batch->parsed()) {
      if (!flags.config.empty()) batch_configs.insert(batch_configs.begin(), flags.config);
      if (batch_configs.empty()) {
        std::cerr << "batch: give at least one config file\n" << batch->help();
        return kValidationExit;
      }
      std::string root = env("NIRPLAN_OUT");
      if (!flags.out.empty()) root = flags.out;
      if (root.empty()) root = "batch_out";
      std::vector<fs::path> files(batch_configs.begin(), batch_configs.end());
      auto adjust = [&](ExperimentConfig& cfg) {
        if (flags.margin) cfg.planner.margin = *flags.margin;
        if (flags.speed) cfg.planner.speed = *flags.speed;
        if (!flags.mask.empty()) cfg.mask = flags.mask;
      };
      const auto result = run_batch(files, root, run_options(flags), flags.seed, adjust);
      std::cout << "batch: " << result.rows.size() - result.failures() << " ok, " << result.failures()
                << " failed; summary in " << (fs::path(root) / "summary.csv").string() << "\n";
      return result.failures() ? kPartialBatch : kOk;
    }

    const ExperimentConfig cfg = resolve(flags);
    const fs::path dir = cfg.output_directory;
    const RunOptions opts = run_options(flags);

    if (run->parsed()) {
      const auto report = run_pipeline(cfg, opts);
      print_summary(report);
      return kOk;
    }
    if (generate->parsed()) {
      detail::run_stage("generate", opts, nullptr, [&] { stage_generate(cfg, dir, flags.overwrite); });
    } else if (render->parsed()) {
      detail::run_stage("render", opts, nullptr, [&] { stage_render(cfg, dir, flags.overwrite); });
      detail::run_stage("calibrate", opts, nullptr, [&] { stage_calibrate(cfg, dir, flags.overwrite); });
    } else if (segment->parsed()) {
      detail::run_stage("segment", opts, nullptr, [&] { stage_segment(cfg, dir, flags.overwrite); });
      detail::run_stage("label", opts, nullptr, [&] { stage_label(dir, flags.overwrite); });
    } else if (plan->parsed()) {
      detail::run_stage("plan", opts, nullptr, [&] { stage_plan(cfg, dir, flags.overwrite); });
    } else if (evaluate->parsed()) {
      const auto metrics =
          detail::run_stage("evaluate", opts, nullptr, [&] { return stage_evaluate(cfg, dir, flags.overwrite); });
      std::cout << metrics.dump(2) << "\n";
    }
    return kOk;
  } catch (const PipelineError& e) {
    return report_error(e, e.code() == ErrorCode::kValidation ? kValidationExit : kPipelineExit);
  } catch (const Error& e) {
    return report_error(e, e.code() == ErrorCode::kValidation ? kValidationExit : kPipelineExit);
  } catch (const std::exception& e) {
    return report_error(e, kPipelineExit);
  }
}
