#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dust/config.hpp"
#include "dust/records.hpp"

namespace dust {

/// Receives (step, stage) for every stage of the control loop, in order.
using TraceHook = std::function<void(std::int64_t, std::string_view)>;

struct EpisodeOptions {
  TraceHook trace;
  /// If non-empty, step t applies replay_controls[t] instead of the planned
  /// control; the controller still runs its full loop.
  std::vector<Eigen::VectorXd> replay_controls;
};

/// One closed-loop episode. Numerical failures abort the episode and are
/// reported in the record instead of being thrown.
EpisodeRecord run_episode(const ExperimentConfig& cfg, std::int64_t episode_index,
                          const EpisodeOptions& opts = {});

struct EpisodeSummary {
  std::int64_t episode = 0;
  double cumulative_cost = 0.0;
  bool success = false;
  bool crashed = false;
  bool aborted = false;
  std::string diagnostic;
};

struct BatchSummary {
  std::string task;
  std::string controller;
  std::uint64_t seed = 0;
  std::vector<EpisodeSummary> episodes;  // sorted by episode index
  double cost_mean = 0.0;
  double cost_std = 0.0;  // population standard deviation
  double success_rate = 0.0;
  double crash_rate = 0.0;
  int aborted = 0;

  std::string to_json() const;
};

BatchSummary summarize_records(const ExperimentConfig& cfg, const std::vector<EpisodeRecord>& records);

struct BatchResult {
  std::vector<EpisodeRecord> records;  // indexed by episode
  BatchSummary summary;
};

/// Runs cfg.episodes episodes on cfg.workers threads. `order` optionally
/// permutes the execution order; results do not depend on it.
BatchResult run_batch(const ExperimentConfig& cfg, const std::vector<std::int64_t>& order = {});

/// Writes config-echo, ep<k>/{trajectory,posterior,policy}.csv and summary.json.
void write_run(const std::filesystem::path& dir, const ExperimentConfig& cfg, const BatchResult& result);

/// Loads the config echo of a run directory.
ExperimentConfig load_run_config(const std::filesystem::path& dir);

/// Recomputes the summary of a run directory from its trajectory files.
BatchSummary summarize_run(const std::filesystem::path& dir);

struct RidgeExport {
  std::size_t snapshots = 0;
  std::filesystem::path particles_csv;
  std::filesystem::path grid_csv;
};

/// Writes ridge.csv (episode, step, particle, per coordinate: value and
/// marginal mixture density at the value) and ridge_grid.csv (the same
/// densities on a regular grid per step), both in physical units.
RidgeExport export_ridge(const std::filesystem::path& dir, int grid_points = 512);

}  // namespace dust
