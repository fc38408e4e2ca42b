#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dust/baselines.hpp"
#include "dust/dyn_inference.hpp"
#include "dust/environments.hpp"
#include "dust/policy_inference.hpp"

namespace dust {

enum class ControllerKind { Dust, Svmpc, Mppi };

std::string_view to_string(ControllerKind kind) noexcept;
ControllerKind parse_controller(std::string_view name);

enum class PriorKind { Uniform, Normal, LogNormal, Point };

/// Initial distribution of the dynamics particles, in physical units.
/// Uniform uses [low, high]; Normal uses center +- scale; LogNormal has
/// median `center` and log-space standard deviation `scale`; Point puts every
/// particle at `center`.
struct ParamPrior {
  PriorKind kind = PriorKind::Uniform;
  Eigen::VectorXd low;
  Eigen::VectorXd high;
  Eigen::VectorXd center;
  Eigen::VectorXd scale;

  Eigen::VectorXd sample(CounterRng& rng, int dim) const;
};

struct ExperimentConfig {
  TaskKind task = TaskKind::Pendulum;
  ControllerKind controller = ControllerKind::Dust;
  int episodes = 10;
  std::uint64_t seed = 0;
  int workers = 1;
  int rollout_workers = 1;
  std::string output = "runs/out";

  // environment
  double dt = 0.05;
  int episode_length = 200;
  Eigen::VectorXd initial_state;
  double actuator_bound = 2.0;
  double obs_noise_std = 0.0;
  bool latent_uniform = false;
  Eigen::VectorXd latent_low;
  Eigen::VectorXd latent_high;
  std::vector<ScheduleEntry> latent_schedule;
  double pendulum_max_speed = 5.0;
  double pendulum_max_accel = 10.0;
  double wheel_radius = 0.06;
  double axial_distance = 0.4;
  double obstacle_radius = 0.6;
  double obstacle_start = 2.0;
  double obstacle_spacing = 2.0;
  double arena_min = 0.0;
  double arena_max = 10.0;
  PendulumCostParams pendulum_cost;
  PointMassCostParams point_mass_cost;
  SkidSteerCostParams skid_steer_cost;

  // policy
  int horizon = 20;
  int num_policies = 3;
  int num_action_samples = 32;
  int num_dyn_samples = 8;
  double alpha = 1.0;
  Eigen::VectorXd control_authority;  // prior mixture and initial spread
  Eigen::VectorXd action_var;         // sampling covariance
  double policy_step_size = 2.0;
  int policy_iterations = 1;
  BandwidthRule policy_bandwidth = BandwidthRule::Silverman;
  double failure_penalty = 1e9;

  // dynamics
  int dyn_particles = 50;
  GmmCovSpec gmm_cov = GmmCovSpec::with_rule(GmmCovRule::ImprovedSheatherJones);
  Eigen::VectorXd obs_var;
  int dyn_steps = 20;
  double dyn_step_size = 0.001;
  bool log_space = false;
  BandwidthRule dyn_bandwidth = BandwidthRule::Median;
  ParamPrior dyn_prior;
  int dyn_update_every = 1;
  bool dyn_sample_particles = false;  // draw particles without mixture noise

  // baselines
  Eigen::VectorXd point_estimate;
  int mppi_samples = 512;
  double mppi_lambda = 1.0;
  bool mppi_true_params = true;

  // applied controls are read from this trajectory.csv instead of the planner
  std::string replay;

  /// Throws InvalidArgument on inconsistent dimensions or ranges.
  void validate() const;
};

/// Default hyperparameters and environment constants for the task.
ExperimentConfig default_config(TaskKind task);

/// Parses the INI text: an [experiment] section selects the task, and the
/// section named after the task overrides its defaults.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// Fully resolved config as INI text; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const ExperimentConfig& cfg);

std::shared_ptr<const Task> make_task(const ExperimentConfig& cfg);
std::vector<Transform> param_transforms(const ExperimentConfig& cfg);
LatentSchedule make_schedule(const ExperimentConfig& cfg, const StreamKey& episode_key);
DynPosterior initial_posterior(const ExperimentConfig& cfg, const StreamKey& episode_key);
DynInferenceConfig dyn_inference_config(const ExperimentConfig& cfg);
PlannerConfig planner_config(const ExperimentConfig& cfg);
MppiConfig mppi_config(const ExperimentConfig& cfg);

}  // namespace dust
