#include "dust/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dust/errors.hpp"

namespace dust {

double wrap_angle(double a) noexcept {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r < 0.0) r += two_pi;
  // r in [0, 2pi) maps to [-pi, pi); flip the lower endpoint to +pi.
  r -= std::numbers::pi;
  return r == -std::numbers::pi ? std::numbers::pi : r;
}

// ---------------------------------------------------------------------------
// ParamVec

Eigen::VectorXd encode(const Eigen::VectorXd& physical, const std::vector<Transform>& transforms) {
  if (static_cast<std::size_t>(physical.size()) != transforms.size()) {
    throw InvalidArgument("encode: transform count does not match parameter dimension");
  }
  Eigen::VectorXd out(physical.size());
  for (Eigen::Index i = 0; i < physical.size(); ++i) {
    if (transforms[static_cast<std::size_t>(i)] == Transform::Log) {
      if (!(physical(i) > 0.0)) throw DomainError("encode: log coordinate must be positive");
      out(i) = std::log(physical(i));
    } else {
      out(i) = physical(i);
    }
  }
  return out;
}

Eigen::VectorXd decode(const Eigen::VectorXd& encoded, const std::vector<Transform>& transforms) {
  if (static_cast<std::size_t>(encoded.size()) != transforms.size()) {
    throw InvalidArgument("decode: transform count does not match parameter dimension");
  }
  Eigen::VectorXd out(encoded.size());
  for (Eigen::Index i = 0; i < encoded.size(); ++i) {
    out(i) = transforms[static_cast<std::size_t>(i)] == Transform::Log ? std::exp(encoded(i))
                                                                        : encoded(i);
  }
  return out;
}

ParamVec::ParamVec(Eigen::VectorXd encoded, std::vector<Transform> transforms)
    : encoded_(std::move(encoded)), transforms_(std::move(transforms)) {
  if (static_cast<std::size_t>(encoded_.size()) != transforms_.size()) {
    throw InvalidArgument("ParamVec: transform count does not match parameter dimension");
  }
  if (!encoded_.allFinite()) throw InvalidArgument("ParamVec: non-finite value");
}

ParamVec ParamVec::from_physical(const Eigen::VectorXd& physical, std::vector<Transform> transforms) {
  Eigen::VectorXd enc = encode(physical, transforms);
  return ParamVec(std::move(enc), std::move(transforms));
}

ParamVec ParamVec::identity(const Eigen::VectorXd& physical) {
  return ParamVec(physical, std::vector<Transform>(static_cast<std::size_t>(physical.size()),
                                                   Transform::Identity));
}

Eigen::VectorXd ParamVec::physical() const { return decode(encoded_, transforms_); }

// ---------------------------------------------------------------------------
// DynamicsModel

double DynamicsModel::clamp_u(int i, double u) const noexcept {
  const double b = control_bound_[static_cast<std::size_t>(i)];
  return std::clamp(u, -b, b);
}

Eigen::VectorXd DynamicsModel::clamp_control(const Eigen::VectorXd& u) const {
  Eigen::VectorXd out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out(i) = clamp_u(static_cast<int>(i), u(i));
  return out;
}

Eigen::VectorXd DynamicsModel::step(const Eigen::VectorXd& s, const Eigen::VectorXd& u,
                                    const Eigen::VectorXd& params, double dt) const {
  if (s.size() != state_dim() || u.size() != control_dim() || params.size() != param_dim()) {
    throw InvalidArgument(std::string(name()) + ": step dimension mismatch");
  }
  if (!s.allFinite() || !u.allFinite()) {
    throw InvalidArgument(std::string(name()) + ": non-finite state or control");
  }
  if (!params.allFinite()) throw InvalidArgument(std::string(name()) + ": non-finite parameter");
  if (!(dt > 0.0)) throw InvalidArgument(std::string(name()) + ": dt must be positive");
  validate_params(params.data());
  Eigen::VectorXd out(state_dim());
  step_into(s.data(), u.data(), params.data(), dt, out.data());
  return out;
}

Eigen::VectorXd DynamicsModel::residual(const Eigen::VectorXd& observed,
                                        const Eigen::VectorXd& predicted) const {
  Eigen::VectorXd r = observed - predicted;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (is_angle(static_cast<int>(i))) r(i) = wrap_angle(r(i));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Pendulum

PendulumModel::PendulumModel(double torque_bound, double max_speed, double max_accel)
    : DynamicsModel({torque_bound}), max_speed_(max_speed), max_accel_(max_accel) {
  if (!(torque_bound > 0.0) || !(max_speed > 0.0) || !(max_accel > 0.0)) {
    throw InvalidArgument("PendulumModel: bounds must be positive");
  }
}

void PendulumModel::validate_params(const double* params) const {
  if (!(params[0] > 0.0)) throw DomainError("pendulum: mass must be positive");
  if (!(params[1] > 0.0)) throw DomainError("pendulum: length must be positive");
}

void PendulumModel::step_into(const double* s, const double* u, const double* params, double dt,
                              double* out) const {
  const double mass = params[0];
  const double length = params[1];
  const double torque = clamp_u(0, u[0]);
  double accel = 3.0 * kGravity / (2.0 * length) * std::sin(s[0] - std::numbers::pi) +
                 3.0 * torque / (mass * length * length);
  accel = std::clamp(accel, -max_accel_, max_accel_);
  out[1] = std::clamp(s[1] + dt * accel, -max_speed_, max_speed_);
  out[0] = s[0] + dt * out[1];
}

double PendulumModel::energy(const Eigen::VectorXd& s, double mass, double length) {
  return mass * length * length * s(1) * s(1) / 6.0 -
         mass * kGravity * 0.5 * length * std::cos(s(0));
}

// ---------------------------------------------------------------------------
// Point mass

PointMassModel::PointMassModel(double force_bound) : DynamicsModel({force_bound, force_bound}) {
  if (!(force_bound > 0.0)) throw InvalidArgument("PointMassModel: force bound must be positive");
}

void PointMassModel::validate_params(const double* params) const {
  if (!(params[0] > 0.0)) throw DomainError("point_mass: mass must be positive");
}

void PointMassModel::step_into(const double* s, const double* u, const double* params, double dt,
                               double* out) const {
  const double inv_mass = 1.0 / params[0];
  out[0] = s[0] + dt * s[2];
  out[1] = s[1] + dt * s[3];
  out[2] = s[2] + dt * clamp_u(0, u[0]) * inv_mass;
  out[3] = s[3] + dt * clamp_u(1, u[1]) * inv_mass;
}

// ---------------------------------------------------------------------------
// Skid steer

SkidSteerModel::SkidSteerModel(double wheel_radius, double axial_distance, double wheel_speed_bound)
    : DynamicsModel({wheel_speed_bound, wheel_speed_bound}),
      wheel_radius_(wheel_radius),
      axial_distance_(axial_distance) {
  if (!(wheel_radius > 0.0)) throw DomainError("skid_steer: wheel radius must be positive");
  if (!(axial_distance > 0.0)) throw DomainError("skid_steer: axial distance must be positive");
  if (!(wheel_speed_bound > 0.0)) throw InvalidArgument("skid_steer: wheel speed bound must be positive");
}

void SkidSteerModel::validate_params(const double* params) const {
  if (!std::isfinite(params[0])) throw DomainError("skid_steer: x_icr must be finite");
}

double SkidSteerModel::forward_speed(const double* u) const noexcept {
  return wheel_radius_ * (clamp_u(0, u[0]) + clamp_u(1, u[1])) / 2.0;
}

void SkidSteerModel::step_into(const double* s, const double* u, const double* params, double dt,
                               double* out) const {
  const double wl = clamp_u(0, u[0]);
  const double wr = clamp_u(1, u[1]);
  const double v = wheel_radius_ * (wr + wl) / 2.0;
  const double yaw_rate = wheel_radius_ * (wr - wl) / axial_distance_;
  const double v_lat = -params[0] * yaw_rate;
  const double c = std::cos(s[2]);
  const double sn = std::sin(s[2]);
  out[0] = s[0] + dt * (v * c - v_lat * sn);
  out[1] = s[1] + dt * (v * sn + v_lat * c);
  out[2] = s[2] + dt * yaw_rate;
}

// ---------------------------------------------------------------------------
// Linear scalar

LinearScalarModel::LinearScalarModel()
    : DynamicsModel({std::numeric_limits<double>::max()}) {}

void LinearScalarModel::validate_params(const double* params) const {
  if (!std::isfinite(params[0])) throw DomainError("linear_scalar: a must be finite");
}

void LinearScalarModel::step_into(const double* s, const double* u, const double* params,
                                  double /*dt*/, double* out) const {
  out[0] = params[0] * s[0] + u[0];
}

// ---------------------------------------------------------------------------

Trajectory rollout(const DynamicsModel& model, const Eigen::VectorXd& x0,
                   const Eigen::MatrixXd& controls, const Eigen::VectorXd& params, double dt) {
  const Eigen::Index horizon = controls.rows();
  if (horizon < 1) throw InvalidArgument("rollout: horizon must be >= 1");
  if (controls.cols() != model.control_dim()) throw InvalidArgument("rollout: control dimension mismatch");
  Trajectory traj;
  traj.states.resize(horizon + 1, model.state_dim());
  traj.controls.resize(horizon, model.control_dim());
  traj.states.row(0) = x0.transpose();
  Eigen::VectorXd s = x0;
  for (Eigen::Index k = 0; k < horizon; ++k) {
    const Eigen::VectorXd u = controls.row(k).transpose();
    s = model.step(s, u, params, dt);
    traj.states.row(k + 1) = s.transpose();
    traj.controls.row(k) = model.clamp_control(u).transpose();
  }
  return traj;
}

double transition_log_likelihood(const DynamicsModel& model, const Observation& obs,
                                 const Eigen::VectorXd& physical_params,
                                 const Eigen::VectorXd& obs_var, double dt) {
  if (obs_var.size() != model.state_dim() || !(obs_var.array() > 0.0).all()) {
    throw InvalidArgument("transition_log_likelihood: observation covariance must be a positive diagonal");
  }
  const Eigen::VectorXd predicted = model.step(obs.x_prev, obs.u_prev, physical_params, dt);
  const Eigen::ArrayXd r = model.residual(obs.x_curr, predicted).array();
  const double quad = (r.square() / obs_var.array()).sum();
  const double log_norm = (2.0 * std::numbers::pi * obs_var.array()).log().sum();
  return -0.5 * (quad + log_norm);
}

Eigen::VectorXd likelihood_grad_fd(const DynamicsModel& model, const Observation& obs,
                                   const ParamVec& params, const Eigen::VectorXd& obs_var,
                                   double dt) {
  const Eigen::VectorXd& base = params.encoded();
  Eigen::VectorXd grad(base.size());
  for (Eigen::Index d = 0; d < base.size(); ++d) {
    const double h = std::max(1e-4, 1e-4 * std::abs(base(d)));
    Eigen::VectorXd plus = base;
    Eigen::VectorXd minus = base;
    plus(d) += h;
    minus(d) -= h;
    double lp = 0.0;
    double lm = 0.0;
    try {
      lp = transition_log_likelihood(model, obs, decode(plus, params.transforms()), obs_var, dt);
      lm = transition_log_likelihood(model, obs, decode(minus, params.transforms()), obs_var, dt);
    } catch (const std::exception& e) {
      throw NumericalFailure("likelihood_grad_fd: probe failed at coordinate " + std::to_string(d) +
                                 ": " + e.what(),
                             static_cast<std::size_t>(d));
    }
    grad(d) = (lp - lm) / (2.0 * h);
    if (!std::isfinite(grad(d))) {
      throw NumericalFailure("likelihood_grad_fd: non-finite gradient at coordinate " + std::to_string(d),
                             static_cast<std::size_t>(d));
    }
  }
  return grad;
}

}  // namespace dust
