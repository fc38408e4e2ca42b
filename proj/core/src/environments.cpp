#include "dust/environments.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "dust/errors.hpp"

namespace dust {

std::string_view to_string(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::Pendulum: return "pendulum";
    case TaskKind::PointMass: return "point_mass";
    case TaskKind::SkidSteer: return "skid_steer";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "pendulum") return TaskKind::Pendulum;
  if (name == "point_mass") return TaskKind::PointMass;
  if (name == "skid_steer") return TaskKind::SkidSteer;
  throw InvalidArgument("unknown task '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// ObstacleGrid

ObstacleGrid ObstacleGrid::four_by_four(double spacing_start, double spacing, double radius,
                                        double arena_min, double arena_max) {
  ObstacleGrid g;
  g.radius = radius;
  g.arena_min = arena_min;
  g.arena_max = arena_max;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      g.centers.emplace_back(spacing_start + spacing * i, spacing_start + spacing * j);
    }
  }
  g.validate();
  return g;
}

void ObstacleGrid::validate() const {
  if (!(radius >= 0.0)) throw InvalidArgument("ObstacleGrid: radius must be non-negative");
  if (!(arena_max > arena_min)) throw InvalidArgument("ObstacleGrid: empty arena");
  for (const auto& c : centers) {
    if (!c.allFinite()) throw InvalidArgument("ObstacleGrid: non-finite centre");
  }
}

bool ObstacleGrid::inside_obstacle(const Eigen::Vector2d& p) const {
  return std::any_of(centers.begin(), centers.end(),
                     [&](const Eigen::Vector2d& c) { return (p - c).squaredNorm() <= radius * radius; });
}

bool ObstacleGrid::segment_collides(const Eigen::Vector2d& a, const Eigen::Vector2d& b) const {
  // The arena is convex, so a segment leaves it iff an endpoint does.
  auto outside = [&](const Eigen::Vector2d& p) {
    return p.x() < arena_min || p.x() > arena_max || p.y() < arena_min || p.y() > arena_max;
  };
  if (outside(a) || outside(b)) return true;
  const Eigen::Vector2d d = b - a;
  const double len2 = d.squaredNorm();
  const double r2 = radius * radius;
  for (const auto& c : centers) {
    double t = len2 > 0.0 ? (c - a).dot(d) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    if ((a + t * d - c).squaredNorm() <= r2) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Task

Task::Task(std::unique_ptr<DynamicsModel> model, double dt) : model_(std::move(model)), dt_(dt) {
  if (!(dt > 0.0)) throw InvalidArgument("Task: dt must be positive");
}

double Task::rollout_cost(const Eigen::VectorXd& x0, const Eigen::MatrixXd& controls,
                          const Eigen::VectorXd& params) const {
  const int sd = model_->state_dim();
  const int ud = model_->control_dim();
  constexpr int kMax = 8;
  std::array<double, kMax> s{};
  std::array<double, kMax> next{};
  std::array<double, kMax> u{};
  std::copy(x0.data(), x0.data() + sd, s.begin());
  bool crashed = false;
  double total = 0.0;
  for (Eigen::Index h = 0; h < controls.rows(); ++h) {
    for (int d = 0; d < ud; ++d) {
      const double b = model_->control_bound(d);
      u[static_cast<std::size_t>(d)] = std::clamp(controls(h, d), -b, b);
    }
    if (!crashed) {
      model_->step_into(s.data(), u.data(), params.data(), dt_, next.data());
      if (crashes(s.data(), next.data())) crashed = true;
    }
    total += instant_cost_raw(s.data(), u.data(), crashed);
    if (!crashed) s = next;
  }
  return total + terminal_cost_raw(s.data());
}

// ---------------------------------------------------------------------------
// Pendulum

PendulumTask::PendulumTask(double dt, double torque_bound, double max_speed, double max_accel,
                           PendulumCostParams cost)
    : Task(std::make_unique<PendulumModel>(torque_bound, max_speed, max_accel), dt), cost_(cost) {}

double PendulumTask::instant_cost_raw(const double* s, const double* u, bool) const {
  const double e = wrap_angle(s[0] - std::numbers::pi);
  return cost_.angle_weight * e * e + cost_.velocity_weight * s[1] * s[1] +
         cost_.torque_weight * u[0] * u[0];
}

double PendulumTask::terminal_cost_raw(const double* s) const {
  const double zero = 0.0;
  return instant_cost_raw(s, &zero, false);
}

double PendulumTask::instant_cost(const Eigen::VectorXd& s, const Eigen::VectorXd& u, bool collided) const {
  const Eigen::VectorXd uc = model().clamp_control(u);
  return instant_cost_raw(s.data(), uc.data(), collided);
}

double PendulumTask::terminal_cost(const Eigen::VectorXd& s) const { return terminal_cost_raw(s.data()); }

bool PendulumTask::is_success(const EpisodeRecord& record) const {
  const auto& rows = record.rows;
  if (rows.size() < 5) return false;
  return std::all_of(rows.end() - 5, rows.end(),
                     [&](const TrajectoryRow& r) { return r.instant_cost < cost_.success_threshold; });
}

// ---------------------------------------------------------------------------
// Point mass

PointMassTask::PointMassTask(double dt, double force_bound, ObstacleGrid grid, PointMassCostParams cost)
    : Task(std::make_unique<PointMassModel>(force_bound), dt), grid_(std::move(grid)), cost_(cost) {
  grid_.validate();
}

double PointMassTask::instant_cost_raw(const double* s, const double* u, bool collided) const {
  const double ex = s[0] - cost_.goal.x();
  const double ey = s[1] - cost_.goal.y();
  return cost_.error_weight * (ex * ex + ey * ey) +
         cost_.velocity_weight * (s[2] * s[2] + s[3] * s[3]) +
         cost_.control_weight * (u[0] * u[0] + u[1] * u[1]) + (collided ? cost_.crash_penalty : 0.0);
}

double PointMassTask::terminal_cost_raw(const double* s) const {
  const double ex = s[0] - cost_.goal.x();
  const double ey = s[1] - cost_.goal.y();
  return cost_.terminal_error_weight * (ex * ex + ey * ey) +
         cost_.terminal_velocity_weight * (s[2] * s[2] + s[3] * s[3]);
}

double PointMassTask::instant_cost(const Eigen::VectorXd& s, const Eigen::VectorXd& u, bool collided) const {
  const Eigen::VectorXd uc = model().clamp_control(u);
  return instant_cost_raw(s.data(), uc.data(), collided);
}

double PointMassTask::terminal_cost(const Eigen::VectorXd& s) const { return terminal_cost_raw(s.data()); }

bool PointMassTask::crashes(const double* from, const double* to) const {
  return grid_.segment_collides({from[0], from[1]}, {to[0], to[1]});
}

bool PointMassTask::is_success(const EpisodeRecord& record) const {
  return !record.rows.empty() &&
         std::none_of(record.rows.begin(), record.rows.end(), [](const TrajectoryRow& r) { return r.crashed; });
}

// ---------------------------------------------------------------------------
// Skid steer

SkidSteerTask::SkidSteerTask(double dt, double wheel_radius, double axial_distance,
                             double wheel_speed_bound, SkidSteerCostParams cost)
    : Task(std::make_unique<SkidSteerModel>(wheel_radius, axial_distance, wheel_speed_bound), dt),
      cost_(cost) {
  if (!(cost_.circle_radius > 0.0)) throw InvalidArgument("SkidSteerTask: radius must be positive");
}

const SkidSteerModel& SkidSteerTask::skid() const { return static_cast<const SkidSteerModel&>(model()); }

double SkidSteerTask::instant_cost_raw(const double* s, const double* u, bool) const {
  const double d = std::hypot(s[0], s[1]) - cost_.circle_radius;
  const double v = skid().forward_speed(u) - cost_.reference_speed;
  return std::sqrt(d * d + cost_.speed_weight * v * v);
}

double SkidSteerTask::terminal_cost_raw(const double* s) const {
  return std::abs(std::hypot(s[0], s[1]) - cost_.circle_radius);
}

double SkidSteerTask::instant_cost(const Eigen::VectorXd& s, const Eigen::VectorXd& u, bool collided) const {
  const Eigen::VectorXd uc = model().clamp_control(u);
  return instant_cost_raw(s.data(), uc.data(), collided);
}

double SkidSteerTask::terminal_cost(const Eigen::VectorXd& s) const { return terminal_cost_raw(s.data()); }

bool SkidSteerTask::is_success(const EpisodeRecord& record) const {
  const auto& rows = record.rows;
  if (rows.empty()) return false;
  const std::size_t start = rows.size() - std::max<std::size_t>(1, rows.size() / 4);
  double sum = 0.0;
  for (std::size_t k = start; k < rows.size(); ++k) {
    sum += std::abs(std::hypot(rows[k].state(0), rows[k].state(1)) - cost_.circle_radius);
  }
  return sum / static_cast<double>(rows.size() - start) < cost_.success_distance;
}

// ---------------------------------------------------------------------------
// LatentSchedule

LatentSchedule::LatentSchedule(std::vector<ScheduleEntry> entries) : entries_(std::move(entries)) {
  if (entries_.empty() || entries_.front().step != 0) {
    throw InvalidArgument("LatentSchedule: first entry must start at step 0");
  }
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    if (!entries_[k].params.allFinite()) throw InvalidArgument("LatentSchedule: non-finite parameter");
    if (entries_[k].params.size() != entries_.front().params.size()) {
      throw InvalidArgument("LatentSchedule: parameter dimension changes");
    }
    if (k > 0 && entries_[k].step <= entries_[k - 1].step) {
      throw InvalidArgument("LatentSchedule: steps must be strictly increasing");
    }
  }
}

const Eigen::VectorXd& LatentSchedule::at(std::int64_t step) const {
  if (entries_.empty()) throw InvalidArgument("LatentSchedule: empty");
  auto it = std::upper_bound(entries_.begin(), entries_.end(), step,
                             [](std::int64_t s, const ScheduleEntry& e) { return s < e.step; });
  return std::prev(it)->params;
}

// ---------------------------------------------------------------------------
// Environment

Environment::Environment(std::shared_ptr<const Task> task, LatentSchedule schedule,
                         Eigen::VectorXd initial_state, double obs_noise_std, StreamKey key)
    : task_(std::move(task)),
      schedule_(std::move(schedule)),
      true_state_(std::move(initial_state)),
      obs_noise_std_(obs_noise_std),
      key_(key) {
  if (!task_) throw InvalidArgument("Environment: null task");
  const auto& m = task_->model();
  if (true_state_.size() != m.state_dim() || !true_state_.allFinite()) {
    throw InvalidArgument("Environment: bad initial state");
  }
  if (schedule_.entries().empty() || schedule_.entries().front().params.size() != m.param_dim()) {
    throw InvalidArgument("Environment: schedule does not match the model");
  }
  for (const auto& e : schedule_.entries()) m.validate_params(e.params.data());
  if (!(obs_noise_std >= 0.0)) throw InvalidArgument("Environment: noise std must be non-negative");
  observed_state_ = observe_state(true_state_, 0);
}

Eigen::VectorXd Environment::observe_state(const Eigen::VectorXd& s, std::int64_t step) const {
  if (obs_noise_std_ == 0.0) return s;
  CounterRng rng = key_.at_step(static_cast<std::uint64_t>(step)).with(Role::Environment).stream();
  Eigen::VectorXd out = s;
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += obs_noise_std_ * rng.normal();
  return out;
}

EnvStepResult Environment::step(const Eigen::VectorXd& u) {
  const auto& m = task_->model();
  if (u.size() != m.control_dim() || !u.allFinite()) {
    throw InvalidArgument("Environment: bad control");
  }
  const Eigen::VectorXd uc = m.clamp_control(u);
  const Eigen::VectorXd& params = schedule_.at(step_);
  EnvStepResult r;
  if (!crashed_) {
    Eigen::VectorXd next(m.state_dim());
    m.step_into(true_state_.data(), uc.data(), params.data(), task_->dt(), next.data());
    if (!next.allFinite()) throw NumericalFailure("Environment: non-finite state");
    if (task_->crashes(true_state_.data(), next.data())) crashed_ = true;
    r.instant_cost = task_->instant_cost(true_state_, uc, crashed_);
    if (!crashed_) true_state_ = std::move(next);
  } else {
    r.instant_cost = task_->instant_cost(true_state_, uc, true);
  }
  const Eigen::VectorXd prev_obs = observed_state_;
  ++step_;
  observed_state_ = observe_state(true_state_, step_);
  r.state = observed_state_;
  r.crashed = crashed_;
  r.observation = Observation{observed_state_, uc, prev_obs, step_};
  return r;
}

}  // namespace dust
