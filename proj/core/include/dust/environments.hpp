#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dust/models.hpp"
#include "dust/observation.hpp"
#include "dust/records.hpp"
#include "dust/rng.hpp"

namespace dust {

enum class TaskKind { Pendulum, PointMass, SkidSteer };

std::string_view to_string(TaskKind kind) noexcept;
TaskKind parse_task_kind(std::string_view name);

/// 16 discs on an equally spaced 4x4 grid inside an axis-aligned square arena.
struct ObstacleGrid {
  std::vector<Eigen::Vector2d> centers;
  double radius = 0.6;
  double arena_min = 0.0;
  double arena_max = 10.0;

  static ObstacleGrid four_by_four(double spacing_start, double spacing, double radius,
                                   double arena_min, double arena_max);

  bool inside_obstacle(const Eigen::Vector2d& p) const;
  /// True if the segment a -> b touches a disc or leaves the arena.
  bool segment_collides(const Eigen::Vector2d& a, const Eigen::Vector2d& b) const;
  void validate() const;
};

struct PendulumCostParams {
  double angle_weight = 131.0;
  double velocity_weight = 0.1;
  double torque_weight = 0.01;
  double success_threshold = 4.0;
};

struct PointMassCostParams {
  Eigen::Vector2d goal{9.5, 9.5};
  double error_weight = 0.5;
  double velocity_weight = 0.25;
  double control_weight = 0.2;
  double crash_penalty = 1e6;
  double terminal_error_weight = 1000.0;
  double terminal_velocity_weight = 0.1;
};

struct SkidSteerCostParams {
  double circle_radius = 1.0;
  double reference_speed = 0.2;
  double speed_weight = 10.0;
  double success_distance = 0.1;
};

/// Controller-visible task definition: model, integration step, costs and
/// geometry. Holds no latent parameters.
class Task {
 public:
  virtual ~Task() = default;

  virtual TaskKind kind() const noexcept = 0;
  const DynamicsModel& model() const noexcept { return *model_; }
  double dt() const noexcept { return dt_; }

  /// c(x, u); `collided` adds the crash penalty where the task has one.
  virtual double instant_cost(const Eigen::VectorXd& s, const Eigen::VectorXd& u,
                              bool collided = false) const = 0;
  virtual double terminal_cost(const Eigen::VectorXd& s) const = 0;
  /// Whether the transition from -> to is a crash (point mass only).
  virtual bool crashes(const double* /*from*/, const double* /*to*/) const { return false; }
  virtual double crash_penalty() const noexcept { return 0.0; }

  /// C = c_term(x_H) + sum_h c(x_h, u_h) of a model rollout with crash
  /// freezing. `controls` is H x control_dim; `params` physical.
  double rollout_cost(const Eigen::VectorXd& x0, const Eigen::MatrixXd& controls,
                      const Eigen::VectorXd& params) const;

  /// Task-specific success predicate over a finished episode.
  virtual bool is_success(const EpisodeRecord& record) const = 0;

 protected:
  Task(std::unique_ptr<DynamicsModel> model, double dt);
  virtual double instant_cost_raw(const double* s, const double* u, bool collided) const = 0;
  virtual double terminal_cost_raw(const double* s) const = 0;

 private:
  std::unique_ptr<DynamicsModel> model_;
  double dt_;
};

class PendulumTask final : public Task {
 public:
  PendulumTask(double dt, double torque_bound, double max_speed, double max_accel,
               PendulumCostParams cost = {});
  TaskKind kind() const noexcept override { return TaskKind::Pendulum; }
  double instant_cost(const Eigen::VectorXd& s, const Eigen::VectorXd& u, bool collided = false) const override;
  double terminal_cost(const Eigen::VectorXd& s) const override;
  bool is_success(const EpisodeRecord& record) const override;
  const PendulumCostParams& cost_params() const noexcept { return cost_; }

 protected:
  double instant_cost_raw(const double* s, const double* u, bool collided) const override;
  double terminal_cost_raw(const double* s) const override;

 private:
  PendulumCostParams cost_;
};

class PointMassTask final : public Task {
 public:
  PointMassTask(double dt, double force_bound, ObstacleGrid grid, PointMassCostParams cost = {});
  TaskKind kind() const noexcept override { return TaskKind::PointMass; }
  double instant_cost(const Eigen::VectorXd& s, const Eigen::VectorXd& u, bool collided = false) const override;
  double terminal_cost(const Eigen::VectorXd& s) const override;
  bool crashes(const double* from, const double* to) const override;
  double crash_penalty() const noexcept override { return cost_.crash_penalty; }
  bool is_success(const EpisodeRecord& record) const override;
  const ObstacleGrid& grid() const noexcept { return grid_; }
  const PointMassCostParams& cost_params() const noexcept { return cost_; }

 protected:
  double instant_cost_raw(const double* s, const double* u, bool collided) const override;
  double terminal_cost_raw(const double* s) const override;

 private:
  ObstacleGrid grid_;
  PointMassCostParams cost_;
};

class SkidSteerTask final : public Task {
 public:
  SkidSteerTask(double dt, double wheel_radius, double axial_distance, double wheel_speed_bound,
                SkidSteerCostParams cost = {});
  TaskKind kind() const noexcept override { return TaskKind::SkidSteer; }
  double instant_cost(const Eigen::VectorXd& s, const Eigen::VectorXd& u, bool collided = false) const override;
  double terminal_cost(const Eigen::VectorXd& s) const override;
  bool is_success(const EpisodeRecord& record) const override;
  const SkidSteerCostParams& cost_params() const noexcept { return cost_; }

 protected:
  double instant_cost_raw(const double* s, const double* u, bool collided) const override;
  double terminal_cost_raw(const double* s) const override;

 private:
  const SkidSteerModel& skid() const;
  SkidSteerCostParams cost_;
};

/// Piecewise-constant true parameters (physical units).
struct ScheduleEntry {
  std::int64_t step = 0;
  Eigen::VectorXd params;
};

class LatentSchedule {
 public:
  LatentSchedule() = default;
  /// Throws InvalidArgument unless steps strictly increase from 0.
  explicit LatentSchedule(std::vector<ScheduleEntry> entries);

  const Eigen::VectorXd& at(std::int64_t step) const;
  const std::vector<ScheduleEntry>& entries() const noexcept { return entries_; }

 private:
  std::vector<ScheduleEntry> entries_;
};

struct EnvStepResult {
  Eigen::VectorXd state;  // as observed by the controller
  Observation observation;
  bool crashed = false;
  double instant_cost = 0.0;  // on the true state, includes any crash penalty
};

/// A running episode. The controller-facing surface exposes states, costs and
/// observations only; the latent schedule stays private.
class Environment {
 public:
  Environment(std::shared_ptr<const Task> task, LatentSchedule schedule, Eigen::VectorXd initial_state,
              double obs_noise_std, StreamKey key);

  const Eigen::VectorXd& observed_state() const noexcept { return observed_state_; }
  std::int64_t step_index() const noexcept { return step_; }
  bool crashed() const noexcept { return crashed_; }
  const Task& task() const noexcept { return *task_; }

  /// Advances the true dynamics with the currently scheduled parameters.
  EnvStepResult step(const Eigen::VectorXd& u);

 private:
  Eigen::VectorXd observe_state(const Eigen::VectorXd& s, std::int64_t step) const;

  std::shared_ptr<const Task> task_;
  LatentSchedule schedule_;
  Eigen::VectorXd true_state_;
  Eigen::VectorXd observed_state_;
  double obs_noise_std_;
  StreamKey key_;
  std::int64_t step_ = 0;
  bool crashed_ = false;
};

}  // namespace dust
