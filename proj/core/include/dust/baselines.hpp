#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "dust/environments.hpp"
#include "dust/policy_inference.hpp"
#include "dust/rng.hpp"

namespace dust {

struct MppiConfig {
  int horizon = 20;
  int num_samples = 512;
  double lambda = 1.0;
  Eigen::VectorXd action_var;  // per control dimension
  double failure_penalty = 1e9;
  int workers = 1;

  void validate(int control_dim) const;
};

struct MppiState {
  Eigen::MatrixXd mean;  // H x control_dim
  MppiConfig cfg;

  static MppiState zeros(const MppiConfig& cfg, int control_dim);
};

/// softmax(-costs / lambda), computed with the minimum cost subtracted.
Eigen::VectorXd mppi_weights(const std::vector<double>& costs, double lambda);

struct MppiResult {
  MppiState state;
  Eigen::VectorXd control;
  Eigen::VectorXd weights;
  double log_likelihood = 0.0;  // logsumexp(-C / lambda) - log K
};

/// Samples K sequences mean + N(0, Sigma), reweights them by cost, emits the
/// first action of the new mean and shifts it (last row repeated).
MppiResult mppi_step(const MppiState& st, const Task& task, const Eigen::VectorXd& x0,
                     const Eigen::VectorXd& params, const StreamKey& key);

/// The policy step with a single frozen parameter estimate (physical units).
PlanOutput svmpc_step(PolicyPlanner& planner, const Eigen::VectorXd& x0,
                      const Eigen::VectorXd& point_estimate, std::int64_t step,
                      const StreamKey& step_key);

}  // namespace dust
