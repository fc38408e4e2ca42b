#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dust {

/// One control tick of a real (environment) episode. `state` is the state the
/// control was applied in; `crashed` is the status after the transition.
struct TrajectoryRow {
  std::int64_t step = 0;
  Eigen::VectorXd state;
  Eigen::VectorXd control;
  double instant_cost = 0.0;
  bool crashed = false;
};

struct PolicyRow {
  std::int64_t step = 0;
  std::int64_t chosen = 0;
  Eigen::VectorXd weights;
  Eigen::VectorXd log_likelihoods;
  Eigen::VectorXd control;
};

/// Decoded posterior particles and mixture standard deviations (encoded
/// space) after the dynamics update of a tick.
struct PosteriorSnapshot {
  std::int64_t step = 0;
  Eigen::MatrixXd particles;
  Eigen::VectorXd gmm_sd;
};

struct EpisodeRecord {
  std::int64_t episode_index = 0;
  std::vector<TrajectoryRow> rows;
  std::vector<PolicyRow> policy_rows;
  std::vector<PosteriorSnapshot> posterior;
  double cumulative_cost = 0.0;  // crash penalties removed
  bool success = false;
  bool crashed = false;
  bool aborted = false;
  std::string diagnostic;
  double wall_clock_seconds = 0.0;
};

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws InvalidArgument if absent.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

void write_trajectory_csv(std::ostream& out, const EpisodeRecord& rec,
                          const std::vector<std::string>& state_names,
                          const std::vector<std::string>& control_names);
void write_posterior_csv(std::ostream& out, const EpisodeRecord& rec,
                         const std::vector<std::string>& param_names);
void write_policy_csv(std::ostream& out, const EpisodeRecord& rec,
                      const std::vector<std::string>& control_names);

/// Applied controls of a trajectory.csv, one vector per step.
std::vector<Eigen::VectorXd> read_trajectory_controls(const std::filesystem::path& path,
                                                      const std::vector<std::string>& control_names);

}  // namespace dust
