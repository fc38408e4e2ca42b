#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "dust/environments.hpp"
#include "dust/records.hpp"
#include "dust/rng.hpp"
#include "dust/svgd.hpp"

namespace dust {

/// theta is an H x control_dim mean action sequence.
struct PolicyParticle {
  Eigen::MatrixXd theta;
  double weight = 0.0;
};

struct PolicyHyper {
  Eigen::VectorXd action_var;  // Sigma_a, one entry per control dimension
  Eigen::VectorXd prior_var;   // Sigma of the prior mixture, per control dimension
  double alpha = 1.0;
  int num_action_samples = 1;
  int num_dyn_samples = 1;

  void validate(int control_dim) const;
};

class PolicySet {
 public:
  PolicySet(std::vector<PolicyParticle> particles, PolicyHyper hyper);

  /// m particles drawn i.i.d. from N(0, init_var) with uniform weights.
  static PolicySet initial(int num_policies, int horizon, const Eigen::VectorXd& init_var,
                           PolicyHyper hyper, CounterRng& rng);

  std::size_t size() const noexcept { return particles_.size(); }
  int horizon() const noexcept { return static_cast<int>(particles_.front().theta.rows()); }
  int control_dim() const noexcept { return static_cast<int>(particles_.front().theta.cols()); }
  const std::vector<PolicyParticle>& particles() const noexcept { return particles_; }
  const PolicyParticle& operator[](std::size_t i) const { return particles_.at(i); }
  const PolicyHyper& hyper() const noexcept { return hyper_; }
  Eigen::VectorXd weights() const;

  /// m x (H * control_dim); row-major flattening of each theta.
  Eigen::MatrixXd flattened() const;
  PolicySet with_flattened(const Eigen::MatrixXd& flat) const;
  PolicySet with_weights(const Eigen::VectorXd& w) const;

 private:
  std::vector<PolicyParticle> particles_;
  PolicyHyper hyper_;
};

Eigen::VectorXd flatten(const Eigen::MatrixXd& theta);
Eigen::MatrixXd unflatten(const Eigen::VectorXd& flat, int horizon, int control_dim);

/// Weighted Gaussian mixture q(theta) = sum_i w_i N(theta; c_i, diag(var))
/// over flattened action sequences.
class PolicyPrior {
 public:
  PolicyPrior(Eigen::MatrixXd centers, Eigen::VectorXd weights, Eigen::VectorXd var);
  /// Mixture of the particles of `ps` weighted by their weights, with
  /// covariance prior_var tiled over the horizon.
  static PolicyPrior from_policies(const PolicySet& ps);

  double log_density(const Eigen::VectorXd& theta_flat) const;
  double log_density_and_grad(const Eigen::VectorXd& theta_flat, Eigen::VectorXd& grad) const;

  const Eigen::MatrixXd& centers() const noexcept { return centers_; }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  const Eigen::VectorXd& var() const noexcept { return var_; }

 private:
  Eigen::MatrixXd centers_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd var_;
  Eigen::VectorXd log_weights_;
  double log_norm_ = 0.0;
};

/// m * N_a control sequences; sequence (i, n) is at index i * N_a + n.
struct ActionSamples {
  std::size_t num_policies = 0;
  std::size_t num_samples = 0;
  std::vector<Eigen::MatrixXd> sequences;

  const Eigen::MatrixXd& at(std::size_t i, std::size_t n) const { return sequences[i * num_samples + n]; }
};

/// u^{i,n} = theta^i + N(0, Sigma_a), one stream per (i, n) derived from `key`.
ActionSamples sample_action_sequences(const PolicySet& ps, const StreamKey& key);

struct RolloutCostTensor {
  std::size_t num_policies = 0;
  std::size_t num_samples = 0;
  std::size_t num_params = 0;
  std::vector<double> costs;
  std::size_t failures = 0;

  double at(std::size_t i, std::size_t n, std::size_t s) const {
    return costs[(i * num_samples + n) * num_params + s];
  }
};

/// costs[i, n, s] = C(rollout(x0, u^{i,n}, params[s])). Parameters are in
/// physical units. A rollout with invalid parameters or a non-finite cost is
/// recorded as `failure_penalty`.
RolloutCostTensor evaluate_costs(const ActionSamples& actions,
                                 const std::vector<Eigen::VectorXd>& params, const Task& task,
                                 const Eigen::VectorXd& x0, double failure_penalty = 1e9,
                                 int workers = 1);

struct LikelihoodEval {
  Eigen::VectorXd log_lik;  // m
  Eigen::MatrixXd grad;     // m x (H * control_dim)
};

/// log l^i = logsumexp(-alpha C[i]) - log(N_a N_s); the gradient is the
/// score-function estimator sum_{n,s} w_{n,s} Sigma_a^{-1} (u^{i,n} - theta^i).
LikelihoodEval log_likelihood_and_grad(const PolicySet& ps, const ActionSamples& actions,
                                       const RolloutCostTensor& costs);

/// One Stein step on the flattened thetas with score = likelihood gradient +
/// prior gradient. A single particle takes a plain gradient step.
PolicySet policy_svgd_step(const PolicySet& ps, const Eigen::MatrixXd& lik_grads,
                           const PolicyPrior& prior, const KernelSpec& kernel, double step_size);

/// Rows move up by one; the last row is the old last row plus N(0, Sigma_a).
PolicySet shift_policies(const PolicySet& ps, CounterRng& rng);

struct Selection {
  PolicySet policies;
  std::size_t chosen = 0;
  Eigen::VectorXd control;
};

/// w_i proportional to l_i q(theta_i), normalized in log space; the chosen
/// particle is the first argmax and its first row is the control.
Selection update_prior_and_select(const PolicySet& ps, const Eigen::VectorXd& log_lik,
                                  const Eigen::VectorXd& prior_log_density);

struct PlannerConfig {
  int horizon = 20;
  int num_policies = 3;
  PolicyHyper hyper;
  Eigen::VectorXd init_var;  // initial particle spread, per control dimension
  double step_size = 2.0;
  int iterations = 1;  // SVGD passes per control tick
  bool clamp_means = true;  // project particle means onto the actuator box
  KernelSpec kernel = KernelSpec::with_rule(BandwidthRule::Silverman);
  double failure_penalty = 1e9;
  int workers = 1;

  void validate(int control_dim) const;
};

struct PlanOutput {
  Eigen::VectorXd control;
  PolicyRow row;
};

/// Stein variational policy optimizer state across control ticks. It sees
/// states and parameter samples only, never observations.
class PolicyPlanner {
 public:
  PolicyPlanner(std::shared_ptr<const Task> task, PlannerConfig cfg, const StreamKey& episode_key);

  /// One control tick from state x0 given parameter samples (physical).
  PlanOutput plan(const Eigen::VectorXd& x0, const std::vector<Eigen::VectorXd>& params,
                  std::int64_t step, const StreamKey& step_key);

  /// Called with the name of each stage of plan() as it starts.
  void set_trace(std::function<void(std::string_view)> trace) { trace_ = std::move(trace); }

  const PolicySet& policies() const noexcept { return policies_; }
  const PolicyPrior& prior() const noexcept { return prior_; }
  const PlannerConfig& config() const noexcept { return cfg_; }

 private:
  PolicySet clamp_policies(const PolicySet& ps) const;

  std::shared_ptr<const Task> task_;
  PlannerConfig cfg_;
  PolicySet policies_;
  PolicyPrior prior_;
  std::function<void(std::string_view)> trace_;
};

}  // namespace dust
