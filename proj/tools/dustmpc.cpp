#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "dust/config.hpp"
#include "dust/harness.hpp"

namespace {

void print_summary(const dust::BatchSummary& s) {
  std::printf("task %s, controller %s, seed %llu\n", s.task.c_str(), s.controller.c_str(),
              static_cast<unsigned long long>(s.seed));
  std::printf("%8s %16s %8s %8s %8s\n", "episode", "cost", "success", "crashed", "aborted");
  for (const auto& e : s.episodes) {
    std::printf("%8lld %16.4f %8d %8d %8d\n", static_cast<long long>(e.episode), e.cumulative_cost,
                e.success ? 1 : 0, e.crashed ? 1 : 0, e.aborted ? 1 : 0);
  }
  std::printf("cost %.4f +- %.4f, success rate %.3f, crash rate %.3f, aborted %d\n", s.cost_mean,
              s.cost_std, s.success_rate, s.crash_rate, s.aborted);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual Stein variational MPC experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

  auto* run = app.add_subcommand("run", "Run a batch of episodes");
  std::string config_path;
  int episodes = 0;
  long long seed = -1;
  int workers = 0;
  std::string out_dir;
  std::string replay_dir;
  run->add_option("--config", config_path, "INI experiment file")->required()->check(CLI::ExistingFile);
  run->add_option("--episodes", episodes, "Override the episode count")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Override the base seed")->check(CLI::NonNegativeNumber);
  run->add_option("--workers", workers, "Episodes run concurrently")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--replay", replay_dir, "Apply the controls recorded in this run directory")
      ->check(CLI::ExistingDirectory);

  auto* ridge = app.add_subcommand("export-ridge", "Write ridge-plot CSVs of the parameter posterior");
  std::string ridge_dir;
  int grid_points = 512;
  ridge->add_option("--run", ridge_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  ridge->add_option("--grid", grid_points, "Grid points per coordinate")->capture_default_str();

  auto* summarize = app.add_subcommand("summarize", "Recompute and print the summary of a run");
  std::string summary_dir;
  summarize->add_option("--run", summary_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*run) {
      dust::ExperimentConfig cfg = dust::load_config(config_path);
      if (episodes > 0) cfg.episodes = episodes;
      if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
      if (workers > 0) cfg.workers = workers;
      if (!out_dir.empty()) cfg.output = out_dir;
      if (!replay_dir.empty()) cfg.replay = replay_dir;
      cfg.validate();
      const dust::BatchResult result = dust::run_batch(cfg);
      dust::write_run(cfg.output, cfg, result);
      print_summary(result.summary);
      return result.summary.aborted == 0 ? 0 : 1;
    }
    if (*ridge) {
      const dust::RidgeExport r = dust::export_ridge(ridge_dir, grid_points);
      std::printf("%zu snapshots -> %s, %s\n", r.snapshots, r.particles_csv.string().c_str(),
                  r.grid_csv.string().c_str());
      return 0;
    }
    if (*summarize) {
      print_summary(dust::summarize_run(summary_dir));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
