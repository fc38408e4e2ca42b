#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "../support.hpp"
#include "dust/baselines.hpp"
#include "dust/errors.hpp"
#include "dust/policy_inference.hpp"

using namespace dust;
using dust::testing::for_all;
using dust::testing::Gen;
using dust::testing::rel_err;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

PolicyHyper hyper(const Eigen::VectorXd& action_var, int na = 4, int ns = 1, double alpha = 1.0) {
  PolicyHyper h;
  h.action_var = action_var;
  h.prior_var = action_var;
  h.alpha = alpha;
  h.num_action_samples = na;
  h.num_dyn_samples = ns;
  return h;
}

PolicySet random_set(Gen& g, int m, int horizon, int dim, const PolicyHyper& h) {
  std::vector<PolicyParticle> ps(static_cast<std::size_t>(m));
  for (auto& p : ps) {
    p.theta = g.matrix(horizon, dim, -1, 1);
    p.weight = 1.0 / m;
  }
  return PolicySet(ps, h);
}

// Costs from a closure over each sampled sequence, bypassing rollouts.
RolloutCostTensor tensor_from(const ActionSamples& a, const std::function<double(const Eigen::MatrixXd&)>& c) {
  RolloutCostTensor t;
  t.num_policies = a.num_policies;
  t.num_samples = a.num_samples;
  t.num_params = 1;
  for (const auto& u : a.sequences) t.costs.push_back(c(u));
  return t;
}

std::shared_ptr<PointMassTask> point_mass_task() {
  return std::make_shared<PointMassTask>(0.05, 10.0, ObstacleGrid::four_by_four(2, 2, 0.6, 0, 10));
}

StreamKey key(std::uint64_t seed = 1) { return StreamKey(seed, 0).at_step(3); }

}  // namespace

TEST(Flatten, RowMajorRoundTrip) {
  Eigen::MatrixXd th(2, 3);
  th << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(flatten(th), vec({1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(unflatten(flatten(th), 2, 3), th);
  EXPECT_THROW(unflatten(vec({1, 2}), 2, 3), InvalidArgument);
}

TEST(SampleActions, DegenerateVarianceReturnsMeans) {
  Gen g(1);
  const PolicySet ps = random_set(g, 3, 5, 2, hyper(vec({1e-12, 1e-12}), 10));
  const ActionSamples a = sample_action_sequences(ps, key());
  ASSERT_EQ(a.sequences.size(), 30u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t n = 0; n < 10; ++n) EXPECT_LT((a.at(i, n) - ps[i].theta).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(SampleActions, StdMatchesSigma) {
  std::vector<PolicyParticle> p{{Eigen::MatrixXd::Constant(1, 1, 0.5), 1.0}};
  const PolicySet ps(p, hyper(vec({4.0}), 4000));
  const ActionSamples a = sample_action_sequences(ps, key());
  double s = 0.0, s2 = 0.0;
  for (const auto& u : a.sequences) {
    s += u(0, 0);
    s2 += u(0, 0) * u(0, 0);
  }
  const double mean = s / 4000.0;
  const double sd = std::sqrt(s2 / 4000.0 - mean * mean);
  EXPECT_LT(rel_err(sd, 2.0), 0.05);
}

TEST(SampleActions, DeterministicPerKey) {
  Gen g(2);
  const PolicySet ps = random_set(g, 2, 4, 1, hyper(vec({1.0}), 8));
  const ActionSamples a = sample_action_sequences(ps, key(5));
  const ActionSamples b = sample_action_sequences(ps, key(5));
  const ActionSamples c = sample_action_sequences(ps, key(6));
  for (std::size_t k = 0; k < a.sequences.size(); ++k) {
    EXPECT_EQ(a.sequences[k], b.sequences[k]);
    EXPECT_NE(a.sequences[k], c.sequences[k]);
  }
}

TEST(EvaluateCosts, ZeroAtGoal) {
  const auto task = point_mass_task();
  std::vector<PolicyParticle> p{{Eigen::MatrixXd::Zero(10, 2), 1.0}};
  const PolicySet ps(p, hyper(vec({1e-30, 1e-30}), 1));
  const ActionSamples a = sample_action_sequences(ps, key());
  const auto c = evaluate_costs(a, {vec({2.0})}, *task, vec({9.5, 9.5, 0, 0}));
  EXPECT_NEAR(c.at(0, 0, 0), 0.0, 1e-20);
}

TEST(EvaluateCosts, HeavierMassCostsMore) {
  const auto task = point_mass_task();
  ActionSamples a;
  a.num_policies = 1;
  a.num_samples = 1;
  a.sequences.push_back(Eigen::MatrixXd::Constant(10, 2, 5.0));
  const auto c = evaluate_costs(a, {vec({2.0}), vec({3.0})}, *task, vec({0.5, 0.5, 0, 0}));
  EXPECT_NE(c.at(0, 0, 0), c.at(0, 0, 1));
  // The lighter mass travels further toward the goal and so ends closer.
  EXPECT_LT(c.at(0, 0, 0), c.at(0, 0, 1));
}

TEST(EvaluateCosts, InvalidParametersArePenalised) {
  const auto task = point_mass_task();
  ActionSamples a;
  a.num_policies = 1;
  a.num_samples = 1;
  a.sequences.push_back(Eigen::MatrixXd::Zero(5, 2));
  const auto c = evaluate_costs(a, {vec({-1.0}), vec({2.0})}, *task, vec({0.5, 0.5, 0, 0}), 1e12);
  EXPECT_EQ(c.at(0, 0, 0), 1e12);
  EXPECT_LT(c.at(0, 0, 1), 1e12);
  EXPECT_EQ(c.failures, 1u);
}

TEST(EvaluateCosts, WorkerCountDoesNotChangeResult) {
  const auto task = point_mass_task();
  Gen g(3);
  const PolicySet ps = random_set(g, 4, 15, 2, hyper(vec({9.0, 9.0}), 16));
  const ActionSamples a = sample_action_sequences(ps, key());
  const auto params = std::vector<Eigen::VectorXd>{vec({2.0}), vec({2.5})};
  const auto x0 = vec({0.5, 0.5, 0, 0});
  EXPECT_EQ(evaluate_costs(a, params, *task, x0, 1e9, 1).costs, evaluate_costs(a, params, *task, x0, 1e9, 8).costs);
}

TEST(LogLikelihood, EqualCostsGiveMeanDirection) {
  std::vector<PolicyParticle> p{{Eigen::MatrixXd::Constant(1, 1, 0.3), 1.0}};
  const PolicySet ps(p, hyper(vec({1.0}), 4000));
  const ActionSamples a = sample_action_sequences(ps, key());
  const LikelihoodEval e = log_likelihood_and_grad(ps, a, tensor_from(a, [](const auto&) { return 1e9; }));
  double mean = 0.0;
  for (const auto& u : a.sequences) mean += u(0, 0) / 4000.0;
  EXPECT_NEAR(e.grad(0, 0), mean - 0.3, 1e-9);
  EXPECT_LT(std::abs(e.grad(0, 0)), 3.0 / std::sqrt(4000.0));
  EXPECT_NEAR(e.log_lik(0), -1e9, 1e-3);
}

TEST(LogLikelihood, SharpTemperaturePointsToBestSample) {
  Gen g(4);
  const PolicySet ps = random_set(g, 1, 6, 2, hyper(vec({1.0, 1.0}), 32, 1, 1e6));
  const ActionSamples a = sample_action_sequences(ps, key());
  const RolloutCostTensor t = tensor_from(a, [](const Eigen::MatrixXd& u) { return (u.array() - 0.7).square().sum(); });
  const LikelihoodEval e = log_likelihood_and_grad(ps, a, t);
  std::size_t best = 0;
  for (std::size_t n = 1; n < 32; ++n) {
    if (t.at(0, n, 0) < t.at(0, best, 0)) best = n;
  }
  const Eigen::VectorXd dir = flatten(a.at(0, best)) - flatten(ps[0].theta);
  const Eigen::VectorXd grad = e.grad.row(0).transpose();
  EXPECT_GT(grad.dot(dir) / (grad.norm() * dir.norm()), 0.99);
}

TEST(LogLikelihood, QuadraticCostClosedForm) {
  // u ~ N(theta, s2), C = u^2: d/dtheta log E[exp(-alpha u^2)] = -2 alpha theta / (1 + 2 alpha s2).
  const double theta = 1.0, s2 = 1.0, alpha = 0.5;
  std::vector<PolicyParticle> p{{Eigen::MatrixXd::Constant(1, 1, theta), 1.0}};
  const PolicySet ps(p, hyper(vec({s2}), 10000, 1, alpha));
  const ActionSamples a = sample_action_sequences(ps, key(11));
  const LikelihoodEval e =
      log_likelihood_and_grad(ps, a, tensor_from(a, [](const Eigen::MatrixXd& u) { return u(0, 0) * u(0, 0); }));
  const double expect = -2.0 * alpha * theta / (1.0 + 2.0 * alpha * s2);
  EXPECT_LT(rel_err(e.grad(0, 0), expect), 0.05);
  const double log_lik = -0.5 * std::log(1.0 + 2.0 * alpha * s2) - alpha * theta * theta / (1.0 + 2.0 * alpha * s2);
  EXPECT_NEAR(e.log_lik(0), log_lik, 0.05);
}

TEST(LogLikelihood, AllPenalisedStaysFinite) {
  Gen g(5);
  const PolicySet ps = random_set(g, 3, 4, 2, hyper(vec({1.0, 1.0}), 10, 2));
  const ActionSamples a = sample_action_sequences(ps, key());
  RolloutCostTensor t;
  t.num_policies = 3;
  t.num_samples = 10;
  t.num_params = 2;
  t.costs.assign(60, 1e9);
  const LikelihoodEval e = log_likelihood_and_grad(ps, a, t);
  EXPECT_TRUE(e.grad.allFinite());
  EXPECT_TRUE(e.log_lik.allFinite());
}

TEST(PolicySvgd, SingleParticleIsGradientStep) {
  Gen g(6);
  const PolicySet ps = random_set(g, 1, 5, 2, hyper(vec({2.0, 2.0})));
  const PolicyPrior prior(g.matrix(2, 10, -1, 1), vec({0.4, 0.6}), Eigen::VectorXd::Constant(10, 2.0));
  const Eigen::MatrixXd lik = g.matrix(1, 10, -1, 1);
  Eigen::VectorXd pg;
  prior.log_density_and_grad(flatten(ps[0].theta), pg);
  const PolicySet out = policy_svgd_step(ps, lik, prior, KernelSpec::with_rule(BandwidthRule::Silverman), 0.3);
  const Eigen::VectorXd expect = flatten(ps[0].theta) + 0.3 * (lik.row(0).transpose() + pg);
  EXPECT_LT((flatten(out[0].theta) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PolicySvgd, ZeroStepIsIdentity) {
  Gen g(7);
  const PolicySet ps = random_set(g, 3, 4, 1, hyper(vec({1.0})));
  const PolicySet out = policy_svgd_step(ps, g.matrix(3, 4, -1, 1), PolicyPrior::from_policies(ps),
                                         KernelSpec::with_rule(BandwidthRule::Silverman), 0.0);
  EXPECT_EQ(out.flattened(), ps.flattened());
}

TEST(PolicySvgd, MatchesDoubleLoopWithSilverman) {
  for_all(10, 80, [](Gen& g) {
    const PolicySet ps = random_set(g, 6, 3, 2, hyper(vec({1.5, 0.5})));
    const PolicyPrior prior = PolicyPrior::from_policies(ps);
    const Eigen::MatrixXd lik = g.matrix(6, 6, -2, 2);
    const double eps = 0.2;
    const Eigen::MatrixXd x = ps.flattened();
    const Eigen::Index n = x.rows(), p = x.cols();

    Eigen::MatrixXd s = lik;
    for (Eigen::Index i = 0; i < n; ++i) {
      // prior score by hand: sum_j r_j (c_j - x) / var
      Eigen::VectorXd lw(n);
      for (Eigen::Index j = 0; j < n; ++j) {
        lw(j) = std::log(ps.weights()(j)) -
                0.5 * ((x.row(i) - x.row(j)).array().square() / prior.var().transpose().array()).sum();
      }
      const Eigen::ArrayXd r = (lw.array() - lw.maxCoeff()).exp() / (lw.array() - lw.maxCoeff()).exp().sum();
      for (Eigen::Index j = 0; j < n; ++j) {
        s.row(i) += r(j) * ((x.row(j) - x.row(i)).array() / prior.var().transpose().array()).matrix();
      }
    }
    Eigen::VectorXd h(p);
    const double factor = std::pow(4.0 / ((p + 2.0) * n), 1.0 / (p + 4.0));
    for (Eigen::Index d = 0; d < p; ++d) {
      const double mean = x.col(d).mean();
      const double sd = std::sqrt((x.col(d).array() - mean).square().sum() / (n - 1.0));
      h(d) = 2.0 * std::pow(sd * factor, 2);
    }
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::ArrayXd diff = (x.row(j) - x.row(i)).transpose().array();
        const double k = std::exp(-(diff.square() / h.array()).sum());
        phi.row(i) += k * s.row(j);
        phi.row(i) -= (k * 2.0 * diff / h.array()).matrix().transpose();
      }
    }
    const Eigen::MatrixXd expect = x + eps * phi / static_cast<double>(n);
    const PolicySet out = policy_svgd_step(ps, lik, prior, KernelSpec::with_rule(BandwidthRule::Silverman), eps);
    EXPECT_LT((out.flattened() - expect).cwiseAbs().maxCoeff(), 1e-10);
  });
}

TEST(Shift, NoiselessShiftMovesRowsUp) {
  Gen g(8);
  const PolicySet ps = random_set(g, 3, 6, 2, hyper(vec({1e-30, 1e-30})));
  CounterRng rng = key().with(Role::PolicyShift).stream();
  const PolicySet out = shift_policies(ps, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(Eigen::MatrixXd(out[i].theta.topRows(5)), Eigen::MatrixXd(ps[i].theta.bottomRows(5)));
    EXPECT_NEAR((out[i].theta.row(5) - ps[i].theta.row(5)).norm(), 0.0, 1e-12);
    EXPECT_EQ(out[i].weight, ps[i].weight);
  }
}

TEST(Shift, ConstantSequenceStaysConstant) {
  std::vector<PolicyParticle> p{{Eigen::MatrixXd::Constant(6, 1, 0.4), 1.0}};
  const PolicySet ps(p, hyper(vec({1.0})));
  CounterRng rng = key().stream();
  const PolicySet twice = shift_policies(shift_policies(ps, rng), rng);
  for (int h = 0; h < 4; ++h) EXPECT_EQ(twice[0].theta(h, 0), 0.4);
}

TEST(Shift, LastRowNoiseStd) {
  std::vector<PolicyParticle> p{{Eigen::MatrixXd::Zero(3, 1), 1.0}};
  const PolicySet ps(p, hyper(vec({2.25})));
  CounterRng rng = key().stream();
  double s2 = 0.0;
  for (int k = 0; k < 4000; ++k) {
    const double v = shift_policies(ps, rng)[0].theta(2, 0);
    s2 += v * v;
  }
  EXPECT_LT(rel_err(std::sqrt(s2 / 4000.0), 1.5), 0.05);
}

TEST(Shift, InverseRecoversInteriorRows) {
  for_all(20, 90, [](Gen& g) {
    const PolicySet ps = random_set(g, 2, g.integer(2, 10), 2, hyper(vec({1.0, 1.0})));
    CounterRng rng = key().stream();
    const PolicySet out = shift_policies(ps, rng);
    const int h = ps.horizon();
    for (std::size_t i = 0; i < 2; ++i) {
      Eigen::MatrixXd back = ps[i].theta;
      back.bottomRows(h - 1) = out[i].theta.topRows(h - 1);
      EXPECT_EQ(back, ps[i].theta);
    }
  });
}

TEST(Select, UniformInputsPickFirst) {
  Gen g(9);
  const PolicySet ps = random_set(g, 4, 3, 1, hyper(vec({1.0})));
  const Selection s = update_prior_and_select(ps, Eigen::VectorXd::Constant(4, -2.0), Eigen::VectorXd::Zero(4));
  EXPECT_EQ(s.chosen, 0u);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(s.policies.weights()(i), 0.25, 1e-15);
  EXPECT_EQ(s.control, Eigen::VectorXd(ps[0].theta.row(0).transpose()));
}

TEST(Select, DominantParticle) {
  Gen g(10);
  const PolicySet ps = random_set(g, 3, 3, 1, hyper(vec({1.0})));
  const Selection s = update_prior_and_select(ps, vec({0.0, std::log(1e6), 0.0}), Eigen::VectorXd::Zero(3));
  EXPECT_EQ(s.chosen, 1u);
  EXPECT_GT(s.policies.weights()(1), 0.999);
}

TEST(Select, NormalisedAndScaleInvariant) {
  for_all(100, 100, [](Gen& g) {
    const int m = g.integer(1, 8);
    const PolicySet ps = random_set(g, m, 2, 1, hyper(vec({1.0})));
    const Eigen::VectorXd ll = g.vector(m, -500, 0);
    const Eigen::VectorXd pl = g.vector(m, -50, 0);
    const Selection a = update_prior_and_select(ps, ll, pl);
    EXPECT_NEAR(a.policies.weights().sum(), 1.0, 1e-9);
    const Selection b = update_prior_and_select(ps, ll.array() + g.uniform(-100, 100), pl);
    EXPECT_EQ(a.chosen, b.chosen);
    EXPECT_LT((a.policies.weights() - b.policies.weights()).cwiseAbs().maxCoeff(), 1e-9);
  });
}

TEST(PolicyPrior, DensityAndGradient) {
  for_all(30, 120, [](Gen& g) {
    const PolicyPrior prior(g.matrix(3, 4, -1, 1), g.vector(3, 0.1, 1.0), g.vector(4, 0.2, 2.0));
    const Eigen::VectorXd x = g.vector(4, -1, 1);
    Eigen::VectorXd grad;
    prior.log_density_and_grad(x, grad);
    for (int d = 0; d < 4; ++d) {
      Eigen::VectorXd a = x, b = x;
      a(d) += 1e-5;
      b(d) -= 1e-5;
      const double fd = (prior.log_density(a) - prior.log_density(b)) / 2e-5;
      EXPECT_NEAR(fd, grad(d), 1e-6 * std::max(1.0, std::abs(grad(d))));
    }
  });
}

TEST(Planner, DeterministicAndBounded) {
  const auto task = point_mass_task();
  PlannerConfig cfg;
  cfg.horizon = 10;
  cfg.num_policies = 3;
  cfg.hyper = hyper(vec({25.0, 25.0}), 16);
  cfg.init_var = vec({25.0, 25.0});
  cfg.step_size = 50.0;
  const StreamKey ep(4, 2);
  PolicyPlanner a(task, cfg, ep), b(task, cfg, ep);
  Eigen::VectorXd x = vec({0.5, 0.5, 0, 0});
  for (int t = 0; t < 5; ++t) {
    const PlanOutput pa = a.plan(x, {vec({2.0})}, t, ep.at_step(static_cast<std::uint64_t>(t)));
    const PlanOutput pb = b.plan(x, {vec({2.0})}, t, ep.at_step(static_cast<std::uint64_t>(t)));
    EXPECT_EQ(pa.control, pb.control);
    EXPECT_EQ(pa.row.weights, pb.row.weights);
    EXPECT_LE(pa.control.cwiseAbs().maxCoeff(), 10.0);
    EXPECT_NEAR(pa.row.weights.sum(), 1.0, 1e-9);
    x = task->model().step(x, pa.control, vec({2.0}), 0.05);
  }
}

TEST(Planner, StagesRunInOrder) {
  const auto task = point_mass_task();
  PlannerConfig cfg;
  cfg.horizon = 5;
  cfg.num_policies = 2;
  cfg.hyper = hyper(vec({1.0, 1.0}), 4);
  cfg.init_var = vec({1.0, 1.0});
  cfg.iterations = 2;
  PolicyPlanner planner(task, cfg, StreamKey(1, 0));
  std::vector<std::string> stages;
  planner.set_trace([&](std::string_view s) { stages.emplace_back(s); });
  planner.plan(vec({0.5, 0.5, 0, 0}), {vec({2.0})}, 0, StreamKey(1, 0).at_step(0));
  const std::vector<std::string> expect{"sample_actions", "evaluate_costs", "policy_update",
                                        "sample_actions", "evaluate_costs", "policy_update", "shift"};
  EXPECT_EQ(stages, expect);
}

TEST(Planner, SvmpcStepIsPlanWithPointEstimate) {
  const auto task = point_mass_task();
  PlannerConfig cfg;
  cfg.horizon = 8;
  cfg.num_policies = 3;
  cfg.hyper = hyper(vec({4.0, 4.0}), 8);
  cfg.init_var = vec({4.0, 4.0});
  const StreamKey ep(9, 1);
  PolicyPlanner a(task, cfg, ep), b(task, cfg, ep);
  const Eigen::VectorXd x = vec({0.5, 0.5, 0.1, 0});
  for (int t = 0; t < 3; ++t) {
    const auto k = ep.at_step(static_cast<std::uint64_t>(t));
    EXPECT_EQ(a.plan(x, {vec({2.0})}, t, k).control, svmpc_step(b, x, vec({2.0}), t, k).control);
  }
}

TEST(PlannerConfig, Validation) {
  PlannerConfig cfg;
  cfg.hyper = hyper(vec({1.0}));
  cfg.init_var = vec({1.0});
  EXPECT_NO_THROW(cfg.validate(1));
  cfg.iterations = 0;
  EXPECT_THROW(cfg.validate(1), InvalidArgument);
  cfg.iterations = 1;
  EXPECT_THROW(cfg.validate(2), InvalidArgument);
  cfg.hyper.alpha = 0.0;
  EXPECT_THROW(cfg.validate(1), InvalidArgument);
}
