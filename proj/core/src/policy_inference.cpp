#include "dust/policy_inference.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <spdlog/spdlog.h>

#include "dust/errors.hpp"
#include "dust/parallel.hpp"

namespace dust {
namespace {

void require_positive(const Eigen::VectorXd& v, const char* what) {
  if (v.size() == 0 || !v.allFinite() || !(v.array() > 0.0).all()) {
    throw InvalidArgument(std::string(what) + " must be a positive finite diagonal");
  }
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& a) {
  const double mx = a.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((a.array() - mx).exp().sum());
}

Eigen::VectorXd tile(const Eigen::VectorXd& per_dim, int horizon) {
  Eigen::VectorXd out(per_dim.size() * horizon);
  for (int h = 0; h < horizon; ++h) out.segment(h * per_dim.size(), per_dim.size()) = per_dim;
  return out;
}

}  // namespace

void PolicyHyper::validate(int control_dim) const {
  require_positive(action_var, "PolicyHyper: action variance");
  require_positive(prior_var, "PolicyHyper: prior variance");
  if (action_var.size() != control_dim || prior_var.size() != control_dim) {
    throw InvalidArgument("PolicyHyper: variance dimension must match the control dimension");
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("PolicyHyper: alpha must be positive");
  if (num_action_samples < 1 || num_dyn_samples < 1) {
    throw InvalidArgument("PolicyHyper: sample counts must be at least 1");
  }
}

// ---------------------------------------------------------------------------
// PolicySet

Eigen::VectorXd flatten(const Eigen::MatrixXd& theta) {
  Eigen::VectorXd out(theta.size());
  for (Eigen::Index h = 0; h < theta.rows(); ++h) {
    for (Eigen::Index d = 0; d < theta.cols(); ++d) out(h * theta.cols() + d) = theta(h, d);
  }
  return out;
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& flat, int horizon, int control_dim) {
  if (flat.size() != static_cast<Eigen::Index>(horizon) * control_dim) {
    throw InvalidArgument("unflatten: size does not match horizon x control_dim");
  }
  Eigen::MatrixXd out(horizon, control_dim);
  for (int h = 0; h < horizon; ++h) {
    for (int d = 0; d < control_dim; ++d) out(h, d) = flat(h * control_dim + d);
  }
  return out;
}

PolicySet::PolicySet(std::vector<PolicyParticle> particles, PolicyHyper hyper)
    : particles_(std::move(particles)), hyper_(std::move(hyper)) {
  if (particles_.empty()) throw InvalidArgument("PolicySet: need at least one particle");
  const auto rows = particles_.front().theta.rows();
  const auto cols = particles_.front().theta.cols();
  if (rows < 1 || cols < 1) throw InvalidArgument("PolicySet: empty action sequence");
  for (const auto& p : particles_) {
    if (p.theta.rows() != rows || p.theta.cols() != cols) {
      throw InvalidArgument("PolicySet: particles have different shapes");
    }
    if (!p.theta.allFinite() || !std::isfinite(p.weight) || p.weight < 0.0 || p.weight > 1.0) {
      throw InvalidArgument("PolicySet: non-finite theta or weight outside [0, 1]");
    }
  }
  hyper_.validate(static_cast<int>(cols));
}

PolicySet PolicySet::initial(int num_policies, int horizon, const Eigen::VectorXd& init_var,
                             PolicyHyper hyper, CounterRng& rng) {
  if (num_policies < 1 || horizon < 1) throw InvalidArgument("PolicySet: need m >= 1 and H >= 1");
  require_positive(init_var, "PolicySet: initial variance");
  std::vector<PolicyParticle> ps(static_cast<std::size_t>(num_policies));
  const Eigen::VectorXd sd = init_var.cwiseSqrt();
  for (auto& p : ps) {
    p.theta.resize(horizon, init_var.size());
    for (int h = 0; h < horizon; ++h) {
      for (Eigen::Index d = 0; d < init_var.size(); ++d) p.theta(h, d) = sd(d) * rng.normal();
    }
    p.weight = 1.0 / num_policies;
  }
  return PolicySet(std::move(ps), std::move(hyper));
}

Eigen::VectorXd PolicySet::weights() const {
  Eigen::VectorXd w(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) w(static_cast<Eigen::Index>(i)) = particles_[i].weight;
  return w;
}

Eigen::MatrixXd PolicySet::flattened() const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(size()), horizon() * control_dim());
  for (std::size_t i = 0; i < size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = flatten(particles_[i].theta).transpose();
  }
  return out;
}

PolicySet PolicySet::with_flattened(const Eigen::MatrixXd& flat) const {
  if (flat.rows() != static_cast<Eigen::Index>(size())) {
    throw InvalidArgument("PolicySet: flattened particle count mismatch");
  }
  std::vector<PolicyParticle> out = particles_;
  for (std::size_t i = 0; i < size(); ++i) {
    out[i].theta = unflatten(flat.row(static_cast<Eigen::Index>(i)).transpose(), horizon(), control_dim());
  }
  return PolicySet(std::move(out), hyper_);
}

PolicySet PolicySet::with_weights(const Eigen::VectorXd& w) const {
  if (w.size() != static_cast<Eigen::Index>(size())) throw InvalidArgument("PolicySet: weight count mismatch");
  std::vector<PolicyParticle> out = particles_;
  for (std::size_t i = 0; i < size(); ++i) out[i].weight = w(static_cast<Eigen::Index>(i));
  return PolicySet(std::move(out), hyper_);
}

// ---------------------------------------------------------------------------
// PolicyPrior

PolicyPrior::PolicyPrior(Eigen::MatrixXd centers, Eigen::VectorXd weights, Eigen::VectorXd var)
    : centers_(std::move(centers)), weights_(std::move(weights)), var_(std::move(var)) {
  if (centers_.rows() < 1 || centers_.cols() != var_.size() || weights_.size() != centers_.rows()) {
    throw InvalidArgument("PolicyPrior: inconsistent dimensions");
  }
  require_positive(var_, "PolicyPrior: variance");
  if (!centers_.allFinite() || !weights_.allFinite() || (weights_.array() < 0.0).any()) {
    throw InvalidArgument("PolicyPrior: non-finite centre or negative weight");
  }
  const double total = weights_.sum();
  if (!(total > 0.0)) throw InvalidArgument("PolicyPrior: weights sum to zero");
  log_weights_ = (weights_ / total).array().log().matrix();
  log_norm_ = -0.5 * (static_cast<double>(var_.size()) * std::log(2.0 * std::numbers::pi) + var_.array().log().sum());
}

PolicyPrior PolicyPrior::from_policies(const PolicySet& ps) {
  return PolicyPrior(ps.flattened(), ps.weights(), tile(ps.hyper().prior_var, ps.horizon()));
}

double PolicyPrior::log_density(const Eigen::VectorXd& theta_flat) const {
  Eigen::VectorXd unused;
  return log_density_and_grad(theta_flat, unused);
}

double PolicyPrior::log_density_and_grad(const Eigen::VectorXd& theta_flat, Eigen::VectorXd& grad) const {
  if (theta_flat.size() != centers_.cols()) throw InvalidArgument("PolicyPrior: dimension mismatch");
  const Eigen::Index k = centers_.rows();
  const Eigen::ArrayXd inv_var = var_.array().inverse();
  Eigen::VectorXd log_terms(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::ArrayXd diff = theta_flat.array() - centers_.row(j).transpose().array();
    log_terms(j) = log_weights_(j) + log_norm_ - 0.5 * (diff.square() * inv_var).sum();
  }
  const double lse = log_sum_exp(log_terms);
  grad = Eigen::VectorXd::Zero(theta_flat.size());
  if (!std::isfinite(lse)) return lse;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double r = std::exp(log_terms(j) - lse);
    if (r == 0.0) continue;
    grad.array() -= r * (theta_flat.array() - centers_.row(j).transpose().array()) * inv_var;
  }
  return lse;
}

// ---------------------------------------------------------------------------
// Sampling and costs

ActionSamples sample_action_sequences(const PolicySet& ps, const StreamKey& key) {
  const auto& hyper = ps.hyper();
  const Eigen::VectorXd sd = hyper.action_var.cwiseSqrt();
  ActionSamples out;
  out.num_policies = ps.size();
  out.num_samples = static_cast<std::size_t>(hyper.num_action_samples);
  out.sequences.reserve(out.num_policies * out.num_samples);
  for (std::size_t i = 0; i < out.num_policies; ++i) {
    const Eigen::MatrixXd& theta = ps[i].theta;
    for (std::size_t n = 0; n < out.num_samples; ++n) {
      CounterRng rng = key.sub({i, n}).stream();
      Eigen::MatrixXd u = theta;
      for (Eigen::Index h = 0; h < u.rows(); ++h) {
        for (Eigen::Index d = 0; d < u.cols(); ++d) u(h, d) += sd(d) * rng.normal();
      }
      out.sequences.push_back(std::move(u));
    }
  }
  return out;
}

RolloutCostTensor evaluate_costs(const ActionSamples& actions,
                                 const std::vector<Eigen::VectorXd>& params, const Task& task,
                                 const Eigen::VectorXd& x0, double failure_penalty, int workers) {
  const auto& model = task.model();
  if (params.empty()) throw InvalidArgument("evaluate_costs: need at least one parameter sample");
  if (x0.size() != model.state_dim() || !x0.allFinite()) {
    throw InvalidArgument("evaluate_costs: bad initial state");
  }
  RolloutCostTensor out;
  out.num_policies = actions.num_policies;
  out.num_samples = actions.num_samples;
  out.num_params = params.size();
  out.costs.assign(out.num_policies * out.num_samples * out.num_params, 0.0);

  std::vector<char> valid(params.size(), 1);
  for (std::size_t s = 0; s < params.size(); ++s) {
    if (params[s].size() != model.param_dim()) {
      throw InvalidArgument("evaluate_costs: parameter dimension mismatch");
    }
    try {
      if (!params[s].allFinite()) throw DomainError("non-finite parameter");
      model.validate_params(params[s].data());
    } catch (const DomainError& e) {
      valid[s] = 0;
      spdlog::debug("evaluate_costs: parameter sample {} rejected: {}", s, e.what());
    }
  }

  const std::size_t cells = actions.sequences.size();
  std::vector<std::size_t> failures(cells, 0);
  parallel_for(cells, workers, [&](std::size_t c) {
    const Eigen::MatrixXd& u = actions.sequences[c];
    for (std::size_t s = 0; s < params.size(); ++s) {
      double cost = valid[s] ? task.rollout_cost(x0, u, params[s]) : failure_penalty;
      if (!std::isfinite(cost)) cost = failure_penalty;
      if (cost == failure_penalty) ++failures[c];
      out.costs[c * out.num_params + s] = cost;
    }
  });
  for (std::size_t f : failures) out.failures += f;
  if (out.failures > 0) {
    spdlog::warn("evaluate_costs: {} rollouts failed and were charged {}", out.failures, failure_penalty);
  }
  return out;
}

LikelihoodEval log_likelihood_and_grad(const PolicySet& ps, const ActionSamples& actions,
                                       const RolloutCostTensor& costs) {
  const std::size_t m = ps.size();
  const std::size_t na = costs.num_samples;
  const std::size_t ns = costs.num_params;
  if (actions.num_policies != m || costs.num_policies != m || actions.num_samples != na) {
    throw InvalidArgument("log_likelihood_and_grad: inconsistent tensor shapes");
  }
  const double alpha = ps.hyper().alpha;
  const Eigen::VectorXd inv_var = tile(ps.hyper().action_var, ps.horizon()).cwiseInverse();
  LikelihoodEval out;
  out.log_lik.resize(static_cast<Eigen::Index>(m));
  out.grad = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), inv_var.size());
  Eigen::VectorXd a(static_cast<Eigen::Index>(na * ns));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < na * ns; ++k) {
      const double c = costs.costs[i * na * ns + k];
      if (!std::isfinite(c)) throw InvalidArgument("log_likelihood_and_grad: non-finite cost");
      a(static_cast<Eigen::Index>(k)) = -alpha * c;
    }
    const double lse = log_sum_exp(a);
    out.log_lik(static_cast<Eigen::Index>(i)) = lse - std::log(static_cast<double>(na * ns));
    const Eigen::VectorXd theta = flatten(ps[i].theta);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
    for (std::size_t n = 0; n < na; ++n) {
      double w = 0.0;
      for (std::size_t s = 0; s < ns; ++s) w += std::exp(a(static_cast<Eigen::Index>(n * ns + s)) - lse);
      if (w == 0.0) continue;
      g += w * (flatten(actions.at(i, n)) - theta);
    }
    out.grad.row(static_cast<Eigen::Index>(i)) = g.cwiseProduct(inv_var).transpose();
  }
  return out;
}

PolicySet policy_svgd_step(const PolicySet& ps, const Eigen::MatrixXd& lik_grads,
                           const PolicyPrior& prior, const KernelSpec& kernel, double step_size) {
  if (!std::isfinite(step_size) || step_size < 0.0) {
    throw InvalidArgument("policy_svgd_step: step size must be finite and non-negative");
  }
  const Eigen::MatrixXd flat = ps.flattened();
  if (lik_grads.rows() != flat.rows() || lik_grads.cols() != flat.cols()) {
    throw InvalidArgument("policy_svgd_step: gradient shape mismatch");
  }
  if (step_size == 0.0) return ps;
  const ScoreFn score = [&](const Eigen::MatrixXd& x) {
    Eigen::MatrixXd s = lik_grads;
    Eigen::VectorXd g;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      prior.log_density_and_grad(x.row(i).transpose(), g);
      s.row(i) += g.transpose();
    }
    return s;
  };
  const ParticleSet updated = svgd_step(ParticleSet(flat), score, kernel, SvgdConfig{step_size, 1});
  return ps.with_flattened(updated.points());
}

PolicySet shift_policies(const PolicySet& ps, CounterRng& rng) {
  const Eigen::VectorXd sd = ps.hyper().action_var.cwiseSqrt();
  std::vector<PolicyParticle> out = ps.particles();
  for (auto& p : out) {
    const Eigen::Index h = p.theta.rows();
    if (h >= 2) p.theta.topRows(h - 1) = p.theta.bottomRows(h - 1).eval();
    for (Eigen::Index d = 0; d < p.theta.cols(); ++d) p.theta(h - 1, d) += sd(d) * rng.normal();
  }
  return PolicySet(std::move(out), ps.hyper());
}

Selection update_prior_and_select(const PolicySet& ps, const Eigen::VectorXd& log_lik,
                                  const Eigen::VectorXd& prior_log_density) {
  const auto m = static_cast<Eigen::Index>(ps.size());
  if (log_lik.size() != m || prior_log_density.size() != m) {
    throw InvalidArgument("update_prior_and_select: expected one value per particle");
  }
  const Eigen::VectorXd logw = log_lik + prior_log_density;
  if (logw.array().isNaN().any()) throw InvalidArgument("update_prior_and_select: NaN input");
  const double lse = log_sum_exp(logw);
  Eigen::VectorXd w(m);
  if (std::isfinite(lse)) {
    w = (logw.array() - lse).exp().matrix();
  } else {
    w.setConstant(1.0 / static_cast<double>(m));
  }
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < m; ++i) {
    if (w(i) > w(best)) best = i;
  }
  Selection sel{ps.with_weights(w), static_cast<std::size_t>(best), {}};
  sel.control = ps[sel.chosen].theta.row(0).transpose();
  return sel;
}

// ---------------------------------------------------------------------------
// PolicyPlanner

void PlannerConfig::validate(int control_dim) const {
  if (horizon < 1 || num_policies < 1) throw InvalidArgument("PlannerConfig: need H >= 1 and m >= 1");
  hyper.validate(control_dim);
  require_positive(init_var, "PlannerConfig: initial variance");
  if (init_var.size() != control_dim) throw InvalidArgument("PlannerConfig: initial variance dimension");
  if (!std::isfinite(step_size) || step_size < 0.0) throw InvalidArgument("PlannerConfig: bad step size");
  if (iterations < 1) throw InvalidArgument("PlannerConfig: need at least one iteration");
  if (!(failure_penalty > 0.0) || !std::isfinite(failure_penalty)) {
    throw InvalidArgument("PlannerConfig: failure penalty must be positive");
  }
}

PolicyPlanner::PolicyPlanner(std::shared_ptr<const Task> task, PlannerConfig cfg, const StreamKey& episode_key)
    : task_(std::move(task)),
      cfg_((cfg.validate(task_->model().control_dim()), std::move(cfg))),
      policies_([&] {
        CounterRng rng = episode_key.with(Role::PolicyInit).stream();
        return clamp_policies(PolicySet::initial(cfg_.num_policies, cfg_.horizon, cfg_.init_var, cfg_.hyper, rng));
      }()),
      prior_(PolicyPrior::from_policies(policies_)) {}

PolicySet PolicyPlanner::clamp_policies(const PolicySet& ps) const {
  if (!cfg_.clamp_means) return ps;
  std::vector<PolicyParticle> out = ps.particles();
  for (auto& p : out) {
    for (Eigen::Index h = 0; h < p.theta.rows(); ++h) {
      p.theta.row(h) = task_->model().clamp_control(p.theta.row(h).transpose()).transpose();
    }
  }
  return PolicySet(std::move(out), ps.hyper());
}

PlanOutput PolicyPlanner::plan(const Eigen::VectorXd& x0, const std::vector<Eigen::VectorXd>& params,
                               std::int64_t step, const StreamKey& step_key) {
  auto mark = [&](std::string_view stage) {
    if (trace_) trace_(stage);
  };
  Eigen::VectorXd prior_log(static_cast<Eigen::Index>(policies_.size()));
  const Eigen::MatrixXd flat = policies_.flattened();
  for (Eigen::Index i = 0; i < flat.rows(); ++i) prior_log(i) = prior_.log_density(flat.row(i).transpose());

  const StreamKey sampling = step_key.with(Role::PolicySampling);
  PolicySet moved = policies_;
  LikelihoodEval lik;
  for (int it = 0; it < cfg_.iterations; ++it) {
    mark("sample_actions");
    const ActionSamples actions =
        sample_action_sequences(moved, it == 0 ? sampling : sampling.sub({static_cast<std::uint64_t>(it)}));
    mark("evaluate_costs");
    const RolloutCostTensor costs =
        evaluate_costs(actions, params, *task_, x0, cfg_.failure_penalty, cfg_.workers);
    lik = log_likelihood_and_grad(moved, actions, costs);
    mark("policy_update");
    moved = clamp_policies(policy_svgd_step(moved, lik.grad, prior_, cfg_.kernel, cfg_.step_size));
  }
  Selection sel = update_prior_and_select(moved, lik.log_lik, prior_log);

  PlanOutput out;
  out.control = sel.control;
  out.row.step = step;
  out.row.chosen = static_cast<std::int64_t>(sel.chosen);
  out.row.weights = sel.policies.weights();
  out.row.log_likelihoods = lik.log_lik;
  out.row.control = task_->model().clamp_control(sel.control);

  mark("shift");
  CounterRng shift_rng = step_key.with(Role::PolicyShift).stream();
  policies_ = clamp_policies(shift_policies(sel.policies, shift_rng));
  prior_ = PolicyPrior::from_policies(policies_);
  return out;
}

}  // namespace dust
