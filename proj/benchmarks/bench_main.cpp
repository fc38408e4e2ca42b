#include <memory>
#include <vector>

#include <benchmark/benchmark.h>

#include "dust/bandwidth.hpp"
#include "dust/dyn_inference.hpp"
#include "dust/environments.hpp"
#include "dust/policy_inference.hpp"
#include "dust/rng.hpp"
#include "dust/svgd.hpp"

using namespace dust;

namespace {

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  CounterRng rng = StreamKey(seed, 0).with(Role::Test).stream();
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

void BM_PhiStar(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const auto d = static_cast<Eigen::Index>(state.range(1));
  const ParticleSet ps(normal_matrix(n, d, 1));
  const Eigen::MatrixXd scores = -ps.points();
  const KernelSpec spec = KernelSpec::with_rule(BandwidthRule::Median);
  for (auto _ : state) benchmark::DoNotOptimize(phi_star(ps, scores, spec));
  state.SetComplexityN(n);
}
BENCHMARK(BM_PhiStar)->ArgsProduct({{10, 50, 200, 800}, {1, 40}})->Complexity();

void BM_Isj(benchmark::State& state) {
  const Eigen::MatrixXd x = normal_matrix(state.range(0), 1, 2);
  for (auto _ : state) benchmark::DoNotOptimize(isj_bandwidth({x.data(), static_cast<std::size_t>(x.size())}));
}
BENCHMARK(BM_Isj)->Arg(50)->Arg(500)->Arg(5000);

void BM_Silverman(benchmark::State& state) {
  const ParticleSet ps(normal_matrix(state.range(0), 2, 3));
  for (auto _ : state) benchmark::DoNotOptimize(silverman_bandwidth(ps));
}
BENCHMARK(BM_Silverman)->Arg(50)->Arg(500);

template <class MakeTask>
void rollout_costs(benchmark::State& state, MakeTask make, const Eigen::VectorXd& x0,
                   const std::vector<Eigen::VectorXd>& params) {
  const std::shared_ptr<const Task> task = make();
  const int horizon = static_cast<int>(state.range(0));
  const int u_dim = task->model().control_dim();
  PolicyHyper hyper;
  hyper.action_var = Eigen::VectorXd::Ones(u_dim);
  hyper.prior_var = Eigen::VectorXd::Ones(u_dim);
  hyper.num_action_samples = static_cast<int>(state.range(1));
  hyper.num_dyn_samples = static_cast<int>(params.size());
  CounterRng rng = StreamKey(4, 0).with(Role::Test).stream();
  const PolicySet ps = PolicySet::initial(4, horizon, hyper.prior_var, hyper, rng);
  const ActionSamples actions = sample_action_sequences(ps, StreamKey(5, 0));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_costs(actions, params, *task, x0));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(actions.sequences.size() * params.size()));
}

void BM_RolloutPendulum(benchmark::State& state) {
  rollout_costs(state, [] { return std::make_shared<PendulumTask>(0.05, 2.0, 5.0, 10.0); },
                (Eigen::VectorXd(2) << 3.0, 0.0).finished(),
                std::vector<Eigen::VectorXd>(8, (Eigen::VectorXd(2) << 1.0, 1.0).finished()));
}
BENCHMARK(BM_RolloutPendulum)->Args({20, 32});

void BM_RolloutPointMass(benchmark::State& state) {
  rollout_costs(
      state,
      [] { return std::make_shared<PointMassTask>(0.05, 10.0, ObstacleGrid::four_by_four(2, 2, 0.6, 0, 10)); },
      (Eigen::VectorXd(4) << 0.5, 0.5, 0.0, 0.0).finished(),
      std::vector<Eigen::VectorXd>(4, Eigen::VectorXd::Constant(1, 2.0)));
}
BENCHMARK(BM_RolloutPointMass)->Args({40, 64});

void BM_RolloutSkidSteer(benchmark::State& state) {
  rollout_costs(state, [] { return std::make_shared<SkidSteerTask>(0.1, 0.06, 0.4, 10.0); },
                Eigen::VectorXd::Zero(3), std::vector<Eigen::VectorXd>(4, Eigen::VectorXd::Constant(1, 0.3)));
}
BENCHMARK(BM_RolloutSkidSteer)->Args({20, 50});

void BM_GmmLogDensity(benchmark::State& state) {
  const DynPosterior post(ParticleSet(normal_matrix(50, 2, 6)), Eigen::VectorXd::Constant(2, 0.1),
                          Eigen::VectorXd::Ones(2), {Transform::Identity, Transform::Identity});
  const Eigen::VectorXd phi = Eigen::VectorXd::Constant(2, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(gmm_log_density_and_grad(post, phi));
}
BENCHMARK(BM_GmmLogDensity);

}  // namespace

BENCHMARK_MAIN();
