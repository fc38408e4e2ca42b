#include "dust/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "dust/errors.hpp"

namespace dust {

void MppiConfig::validate(int control_dim) const {
  if (horizon < 1) throw InvalidArgument("MppiConfig: horizon must be at least 1");
  if (num_samples < 1) throw InvalidArgument("MppiConfig: need at least one sample");
  if (!(lambda > 0.0)) throw InvalidArgument("MppiConfig: lambda must be positive");
  if (action_var.size() != control_dim || !action_var.allFinite() || !(action_var.array() > 0.0).all()) {
    throw InvalidArgument("MppiConfig: action variance must be positive per control dimension");
  }
}

MppiState MppiState::zeros(const MppiConfig& cfg, int control_dim) {
  cfg.validate(control_dim);
  return {Eigen::MatrixXd::Zero(cfg.horizon, control_dim), cfg};
}

Eigen::VectorXd mppi_weights(const std::vector<double>& costs, double lambda) {
  if (costs.empty()) throw InvalidArgument("mppi_weights: no costs");
  if (!(lambda > 0.0)) throw InvalidArgument("mppi_weights: lambda must be positive");
  const double lo = *std::min_element(costs.begin(), costs.end());
  Eigen::VectorXd w(static_cast<Eigen::Index>(costs.size()));
  for (std::size_t k = 0; k < costs.size(); ++k) {
    if (!std::isfinite(costs[k])) throw InvalidArgument("mppi_weights: non-finite cost");
    w(static_cast<Eigen::Index>(k)) = std::exp(-(costs[k] - lo) / lambda);
  }
  return w / w.sum();
}

MppiResult mppi_step(const MppiState& st, const Task& task, const Eigen::VectorXd& x0,
                     const Eigen::VectorXd& params, const StreamKey& key) {
  const auto& cfg = st.cfg;
  cfg.validate(static_cast<int>(st.mean.cols()));
  const Eigen::VectorXd sd = cfg.action_var.cwiseSqrt();

  ActionSamples samples;
  samples.num_policies = 1;
  samples.num_samples = static_cast<std::size_t>(cfg.num_samples);
  samples.sequences.reserve(samples.num_samples);
  for (std::size_t k = 0; k < samples.num_samples; ++k) {
    CounterRng rng = key.with(Role::Mppi).sub({k}).stream();
    Eigen::MatrixXd u = st.mean;
    for (Eigen::Index h = 0; h < u.rows(); ++h) {
      for (Eigen::Index d = 0; d < u.cols(); ++d) u(h, d) += sd(d) * rng.normal();
    }
    samples.sequences.push_back(std::move(u));
  }
  const RolloutCostTensor costs =
      evaluate_costs(samples, {params}, task, x0, cfg.failure_penalty, cfg.workers);

  MppiResult out;
  out.weights = mppi_weights(costs.costs, cfg.lambda);
  const double lo = *std::min_element(costs.costs.begin(), costs.costs.end());
  double acc = 0.0;
  for (double c : costs.costs) acc += std::exp(-(c - lo) / cfg.lambda);
  out.log_likelihood = -lo / cfg.lambda + std::log(acc / static_cast<double>(costs.costs.size()));
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(st.mean.rows(), st.mean.cols());
  for (std::size_t k = 0; k < samples.num_samples; ++k) {
    mean += out.weights(static_cast<Eigen::Index>(k)) * samples.sequences[k];
  }
  out.control = mean.row(0).transpose();
  const Eigen::Index h = mean.rows();
  if (h >= 2) mean.topRows(h - 1) = mean.bottomRows(h - 1).eval();
  out.state = MppiState{std::move(mean), cfg};
  return out;
}

PlanOutput svmpc_step(PolicyPlanner& planner, const Eigen::VectorXd& x0,
                      const Eigen::VectorXd& point_estimate, std::int64_t step,
                      const StreamKey& step_key) {
  return planner.plan(x0, {point_estimate}, step, step_key);
}

}  // namespace dust
