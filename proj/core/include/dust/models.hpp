#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dust/observation.hpp"

namespace dust {

/// Wrap an angle to (-pi, pi].
double wrap_angle(double a) noexcept;

enum class Transform { Identity, Log };

/// Simulator parameters stored in inference ("encoded") coordinates. Log
/// coordinates decode through exp and are therefore strictly positive.
class ParamVec {
 public:
  ParamVec() = default;
  ParamVec(Eigen::VectorXd encoded, std::vector<Transform> transforms);

  static ParamVec from_physical(const Eigen::VectorXd& physical, std::vector<Transform> transforms);
  static ParamVec identity(const Eigen::VectorXd& physical);

  const Eigen::VectorXd& encoded() const noexcept { return encoded_; }
  Eigen::VectorXd physical() const;
  const std::vector<Transform>& transforms() const noexcept { return transforms_; }
  std::size_t size() const noexcept { return transforms_.size(); }

 private:
  Eigen::VectorXd encoded_;
  std::vector<Transform> transforms_;
};

Eigen::VectorXd encode(const Eigen::VectorXd& physical, const std::vector<Transform>& transforms);
Eigen::VectorXd decode(const Eigen::VectorXd& encoded, const std::vector<Transform>& transforms);

enum class ModelKind { Pendulum, PointMass, SkidSteer, LinearScalar };

/// Parametric forward model x' = f_phi(x, u) integrated with one Euler step
/// per call. Parameters are passed in physical units.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  virtual ModelKind kind() const noexcept = 0;
  virtual std::string_view name() const noexcept = 0;
  virtual int state_dim() const noexcept = 0;
  virtual int control_dim() const noexcept = 0;
  virtual int param_dim() const noexcept = 0;
  virtual std::vector<std::string> param_names() const = 0;
  virtual std::vector<std::string> state_names() const = 0;
  virtual std::vector<std::string> control_names() const = 0;

  /// Throws DomainError if a parameter is outside its physical range.
  virtual void validate_params(const double* params) const = 0;

  /// Unchecked hot-path step; `u` is clamped to the actuator bounds here.
  virtual void step_into(const double* s, const double* u, const double* params, double dt,
                         double* out) const = 0;

  virtual bool is_angle(int /*state_index*/) const noexcept { return false; }

  /// Checked single step (finite inputs, dt > 0, parameter domain).
  Eigen::VectorXd step(const Eigen::VectorXd& s, const Eigen::VectorXd& u,
                       const Eigen::VectorXd& params, double dt) const;
  Eigen::VectorXd step(const Eigen::VectorXd& s, const Eigen::VectorXd& u, const ParamVec& params,
                       double dt) const {
    return step(s, u, params.physical(), dt);
  }

  Eigen::VectorXd clamp_control(const Eigen::VectorXd& u) const;
  double control_bound(int i) const { return control_bound_.at(static_cast<std::size_t>(i)); }

  /// observed - predicted, angle coordinates wrapped to (-pi, pi].
  Eigen::VectorXd residual(const Eigen::VectorXd& observed, const Eigen::VectorXd& predicted) const;

 protected:
  explicit DynamicsModel(std::vector<double> control_bound) : control_bound_(std::move(control_bound)) {}
  double clamp_u(int i, double u) const noexcept;

 private:
  std::vector<double> control_bound_;  // symmetric: |u_i| <= bound_i
};

/// Rigid pole on a torque-driven pivot. State [angle, angular velocity] with
/// angle 0 hanging down and pi upright. Parameters [mass, length].
/// Semi-implicit Euler: the clamped velocity is updated first and then moves
/// the angle.
class PendulumModel final : public DynamicsModel {
 public:
  static constexpr double kGravity = 9.81;

  explicit PendulumModel(double torque_bound = 2.0, double max_speed = 5.0, double max_accel = 10.0);

  ModelKind kind() const noexcept override { return ModelKind::Pendulum; }
  std::string_view name() const noexcept override { return "pendulum"; }
  int state_dim() const noexcept override { return 2; }
  int control_dim() const noexcept override { return 1; }
  int param_dim() const noexcept override { return 2; }
  std::vector<std::string> param_names() const override { return {"mass", "length"}; }
  std::vector<std::string> state_names() const override { return {"theta", "theta_dot"}; }
  std::vector<std::string> control_names() const override { return {"torque"}; }
  void validate_params(const double* params) const override;
  void step_into(const double* s, const double* u, const double* params, double dt,
                 double* out) const override;
  bool is_angle(int i) const noexcept override { return i == 0; }

  double max_speed() const noexcept { return max_speed_; }
  double max_accel() const noexcept { return max_accel_; }

  /// Mechanical energy of the uniform rod, zero potential at the pivot.
  static double energy(const Eigen::VectorXd& s, double mass, double length);

 private:
  double max_speed_;
  double max_accel_;
};

/// Planar double integrator, state [x, y, vx, vy], force control, parameter [mass].
class PointMassModel final : public DynamicsModel {
 public:
  explicit PointMassModel(double force_bound = 10.0);

  ModelKind kind() const noexcept override { return ModelKind::PointMass; }
  std::string_view name() const noexcept override { return "point_mass"; }
  int state_dim() const noexcept override { return 4; }
  int control_dim() const noexcept override { return 2; }
  int param_dim() const noexcept override { return 1; }
  std::vector<std::string> param_names() const override { return {"mass"}; }
  std::vector<std::string> state_names() const override { return {"x", "y", "vx", "vy"}; }
  std::vector<std::string> control_names() const override { return {"fx", "fy"}; }
  void validate_params(const double* params) const override;
  void step_into(const double* s, const double* u, const double* params, double dt,
                 double* out) const override;
};

/// Kinematic skid-steer unicycle with lateral slip from the ICR offset.
/// State [x, y, heading], controls [left, right] wheel speeds, parameter [x_icr].
class SkidSteerModel final : public DynamicsModel {
 public:
  SkidSteerModel(double wheel_radius = 0.06, double axial_distance = 0.4,
                 double wheel_speed_bound = 10.0);

  ModelKind kind() const noexcept override { return ModelKind::SkidSteer; }
  std::string_view name() const noexcept override { return "skid_steer"; }
  int state_dim() const noexcept override { return 3; }
  int control_dim() const noexcept override { return 2; }
  int param_dim() const noexcept override { return 1; }
  std::vector<std::string> param_names() const override { return {"x_icr"}; }
  std::vector<std::string> state_names() const override { return {"x", "y", "heading"}; }
  std::vector<std::string> control_names() const override { return {"omega_left", "omega_right"}; }
  void validate_params(const double* params) const override;
  void step_into(const double* s, const double* u, const double* params, double dt,
                 double* out) const override;
  bool is_angle(int i) const noexcept override { return i == 2; }

  double wheel_radius() const noexcept { return wheel_radius_; }
  double axial_distance() const noexcept { return axial_distance_; }
  /// Forward speed r (w_l + w_r) / 2 for an (unclamped) wheel-speed command.
  double forward_speed(const double* u) const noexcept;

 private:
  double wheel_radius_;
  double axial_distance_;
};

/// Scalar x' = a x + u; the parameter [a] is unconstrained.
class LinearScalarModel final : public DynamicsModel {
 public:
  LinearScalarModel();

  ModelKind kind() const noexcept override { return ModelKind::LinearScalar; }
  std::string_view name() const noexcept override { return "linear_scalar"; }
  int state_dim() const noexcept override { return 1; }
  int control_dim() const noexcept override { return 1; }
  int param_dim() const noexcept override { return 1; }
  std::vector<std::string> param_names() const override { return {"a"}; }
  std::vector<std::string> state_names() const override { return {"x"}; }
  std::vector<std::string> control_names() const override { return {"u"}; }
  void validate_params(const double* params) const override;
  void step_into(const double* s, const double* u, const double* params, double dt,
                 double* out) const override;
};

struct Trajectory {
  Eigen::MatrixXd states;    // (H + 1) x state_dim, row 0 is the initial state
  Eigen::MatrixXd controls;  // H x control_dim, as applied (clamped)
};

/// states[k + 1] = step(states[k], controls[k]); controls is H x control_dim.
Trajectory rollout(const DynamicsModel& model, const Eigen::VectorXd& x0,
                   const Eigen::MatrixXd& controls, const Eigen::VectorXd& params, double dt);

/// log N(x_curr; f_phi(x_prev, u_prev), diag(obs_var)).
double transition_log_likelihood(const DynamicsModel& model, const Observation& obs,
                                 const Eigen::VectorXd& physical_params,
                                 const Eigen::VectorXd& obs_var, double dt);

/// Central finite-difference gradient of the transition log-likelihood with
/// respect to the encoded coordinates of `params`; per-coordinate step
/// max(1e-4, 1e-4 |phi_d|). Throws NumericalFailure naming the coordinate.
Eigen::VectorXd likelihood_grad_fd(const DynamicsModel& model, const Observation& obs,
                                   const ParamVec& params, const Eigen::VectorXd& obs_var,
                                   double dt);

}  // namespace dust
