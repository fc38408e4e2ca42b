#include "dust/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "dust/errors.hpp"
#include "dust/parallel.hpp"

namespace dust {
namespace {

namespace fs = std::filesystem;

void emit(const TraceHook& hook, std::int64_t step, std::string_view stage) {
  if (hook) hook(step, stage);
}

PosteriorSnapshot point_snapshot(std::int64_t step, const Eigen::VectorXd& params) {
  return {step, params.transpose(), Eigen::VectorXd::Zero(params.size())};
}

double penalty_free_cost(const std::vector<TrajectoryRow>& rows, double penalty) {
  double total = 0.0;
  for (const auto& r : rows) total += r.instant_cost - (r.crashed ? penalty : 0.0);
  return total;
}

void finish_record(EpisodeRecord& rec, const Task& task) {
  rec.crashed = std::any_of(rec.rows.begin(), rec.rows.end(), [](const TrajectoryRow& r) { return r.crashed; });
  rec.cumulative_cost = penalty_free_cost(rec.rows, task.crash_penalty());
  rec.success = !rec.aborted && task.is_success(rec);
}

fs::path episode_dir(const fs::path& dir, std::int64_t k) { return dir / ("ep" + std::to_string(k)); }

std::vector<std::int64_t> episode_indices(const fs::path& dir) {
  std::vector<std::int64_t> out;
  if (!fs::is_directory(dir)) throw InvalidArgument("run directory '" + dir.string() + "' does not exist");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.size() < 3 || name.rfind("ep", 0) != 0) continue;
    const std::string digits = name.substr(2);
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    out.push_back(std::stoll(digits));
  }
  std::sort(out.begin(), out.end());
  return out;
}

double parse_cell(const std::string& cell) {
  std::size_t used = 0;
  const double v = std::stod(cell, &used);
  if (used != cell.size()) throw InvalidArgument("csv: bad number '" + cell + "'");
  return v;
}

}  // namespace

EpisodeRecord run_episode(const ExperimentConfig& cfg, std::int64_t episode_index,
                          const EpisodeOptions& opts) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const StreamKey key(cfg.seed, static_cast<std::uint64_t>(episode_index));
  const std::shared_ptr<const Task> task = make_task(cfg);
  const DynamicsModel& model = task->model();
  const LatentSchedule schedule = make_schedule(cfg, key);
  Environment env(task, schedule, cfg.initial_state, cfg.obs_noise_std, key);

  EpisodeRecord rec;
  rec.episode_index = episode_index;

  std::optional<PolicyPlanner> planner;
  std::optional<MppiState> mppi;
  std::optional<DynPosterior> posterior;
  const DynInferenceConfig dyn_cfg = dyn_inference_config(cfg);

  try {
    if (cfg.controller == ControllerKind::Mppi) {
      mppi = MppiState::zeros(mppi_config(cfg), model.control_dim());
    } else {
      planner.emplace(task, planner_config(cfg), key);
      planner->set_trace([&](std::string_view stage) { emit(opts.trace, env.step_index(), stage); });
    }
    if (cfg.controller == ControllerKind::Dust) posterior = initial_posterior(cfg, key);

    std::vector<Observation> pending;
    std::optional<Observation> last_obs;
    for (std::int64_t t = 0; t < cfg.episode_length; ++t) {
      const StreamKey step_key = key.at_step(static_cast<std::uint64_t>(t));
      emit(opts.trace, t, "state");
      const Eigen::VectorXd x = env.observed_state();

      Eigen::VectorXd control;
      if (cfg.controller == ControllerKind::Dust) {
        if (last_obs) {
          emit(opts.trace, t, "observe");
          pending.push_back(*last_obs);
        }
        if (!pending.empty() && t % cfg.dyn_update_every == 0) {
          emit(opts.trace, t, "dynamics_update");
          for (const auto& obs : pending) *posterior = observe(*posterior, obs, model, cfg.dt, dyn_cfg);
          pending.clear();
        }
        const SampleFrom from = cfg.dyn_sample_particles ? SampleFrom::Particles : SampleFrom::Mixture;
        rec.posterior.push_back({t, posterior->physical_particles(),
                                 from == SampleFrom::Particles ? Eigen::VectorXd::Zero(static_cast<Eigen::Index>(posterior->dim()))
                                                               : Eigen::VectorXd(posterior->gmm_var().cwiseSqrt())});
        emit(opts.trace, t, "sample_params");
        CounterRng rng = step_key.with(Role::DynamicsSampling).stream();
        std::vector<Eigen::VectorXd> params;
        for (const auto& p :
             sample_params(*posterior, static_cast<std::size_t>(cfg.num_dyn_samples), rng, from)) {
          params.push_back(p.physical());
        }
        PlanOutput out = planner->plan(x, params, t, step_key);
        control = out.control;
        rec.policy_rows.push_back(std::move(out.row));
      } else if (cfg.controller == ControllerKind::Svmpc) {
        emit(opts.trace, t, "sample_params");
        rec.posterior.push_back(point_snapshot(t, cfg.point_estimate));
        PlanOutput out = svmpc_step(*planner, x, cfg.point_estimate, t, step_key);
        control = out.control;
        rec.policy_rows.push_back(std::move(out.row));
      } else {
        emit(opts.trace, t, "sample_params");
        const Eigen::VectorXd params = cfg.mppi_true_params ? schedule.at(t) : cfg.point_estimate;
        rec.posterior.push_back(point_snapshot(t, params));
        emit(opts.trace, t, "evaluate_costs");
        MppiResult res = mppi_step(*mppi, *task, x, params, step_key);
        mppi = std::move(res.state);
        control = res.control;
        PolicyRow row;
        row.step = t;
        row.chosen = 0;
        row.weights = Eigen::VectorXd::Ones(1);
        row.log_likelihoods = Eigen::VectorXd::Constant(1, res.log_likelihood);
        row.control = model.clamp_control(control);
        rec.policy_rows.push_back(std::move(row));
      }

      if (!opts.replay_controls.empty()) {
        if (static_cast<std::size_t>(t) >= opts.replay_controls.size()) {
          throw InvalidArgument("replay: recorded trajectory is shorter than the episode");
        }
        control = opts.replay_controls[static_cast<std::size_t>(t)];
      }
      emit(opts.trace, t, "apply");
      const EnvStepResult r = env.step(control);
      rec.rows.push_back({t, x, model.clamp_control(control), r.instant_cost, r.crashed});
      last_obs = r.observation;
    }
  } catch (const std::exception& e) {
    rec.aborted = true;
    rec.diagnostic = e.what();
    spdlog::error("episode {} aborted at step {}: {}", episode_index, env.step_index(), e.what());
  }
  finish_record(rec, *task);
  rec.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  spdlog::info("episode {} done: cost {:.3f}, success {}, {:.2f} s", episode_index, rec.cumulative_cost,
               rec.success, rec.wall_clock_seconds);
  return rec;
}

std::string BatchSummary::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = task;
  j["controller"] = controller;
  j["seed"] = seed;
  j["episodes"] = episodes.size();
  j["cost_mean"] = cost_mean;
  j["cost_std"] = cost_std;
  j["success_rate"] = success_rate;
  j["crash_rate"] = crash_rate;
  j["aborted"] = aborted;
  auto& arr = j["per_episode"] = nlohmann::ordered_json::array();
  for (const auto& e : episodes) {
    nlohmann::ordered_json o;
    o["episode"] = e.episode;
    o["cumulative_cost"] = e.cumulative_cost;
    o["success"] = e.success;
    o["crashed"] = e.crashed;
    o["aborted"] = e.aborted;
    if (!e.diagnostic.empty()) o["diagnostic"] = e.diagnostic;
    arr.push_back(std::move(o));
  }
  return j.dump(2) + "\n";
}

BatchSummary summarize_records(const ExperimentConfig& cfg, const std::vector<EpisodeRecord>& records) {
  BatchSummary s;
  s.task = std::string(to_string(cfg.task));
  s.controller = std::string(to_string(cfg.controller));
  s.seed = cfg.seed;
  for (const auto& r : records) {
    s.episodes.push_back({r.episode_index, r.cumulative_cost, r.success, r.crashed, r.aborted, r.diagnostic});
  }
  std::sort(s.episodes.begin(), s.episodes.end(),
            [](const EpisodeSummary& a, const EpisodeSummary& b) { return a.episode < b.episode; });
  if (s.episodes.empty()) return s;
  const double n = static_cast<double>(s.episodes.size());
  double sum = 0.0;
  for (const auto& e : s.episodes) sum += e.cumulative_cost;
  s.cost_mean = sum / n;
  double sq = 0.0;
  for (const auto& e : s.episodes) sq += (e.cumulative_cost - s.cost_mean) * (e.cumulative_cost - s.cost_mean);
  s.cost_std = std::sqrt(sq / n);
  int successes = 0;
  int crashes = 0;
  for (const auto& e : s.episodes) {
    successes += e.success ? 1 : 0;
    crashes += e.crashed ? 1 : 0;
    s.aborted += e.aborted ? 1 : 0;
  }
  s.success_rate = successes / n;
  s.crash_rate = crashes / n;
  return s;
}

BatchResult run_batch(const ExperimentConfig& cfg, const std::vector<std::int64_t>& order) {
  cfg.validate();
  std::vector<std::int64_t> schedule = order;
  if (schedule.empty()) {
    schedule.resize(static_cast<std::size_t>(cfg.episodes));
    std::iota(schedule.begin(), schedule.end(), 0);
  }
  std::vector<std::int64_t> sorted = schedule;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (sorted[k] != static_cast<std::int64_t>(k) || sorted.size() != static_cast<std::size_t>(cfg.episodes)) {
      throw InvalidArgument("run_batch: order must be a permutation of the episode indices");
    }
  }

  std::vector<std::vector<Eigen::VectorXd>> replays(schedule.size());
  if (!cfg.replay.empty()) {
    const auto names = make_task(cfg)->model().control_names();
    for (std::size_t k = 0; k < replays.size(); ++k) {
      replays[k] = read_trajectory_controls(episode_dir(cfg.replay, static_cast<std::int64_t>(k)) / "trajectory.csv", names);
    }
  }

  BatchResult result;
  result.records.resize(schedule.size());
  parallel_for(schedule.size(), cfg.workers, [&](std::size_t pos) {
    const std::int64_t ep = schedule[pos];
    EpisodeOptions opts;
    opts.replay_controls = replays[static_cast<std::size_t>(ep)];
    result.records[static_cast<std::size_t>(ep)] = run_episode(cfg, ep, opts);
  });
  result.summary = summarize_records(cfg, result.records);
  return result;
}

void write_run(const fs::path& dir, const ExperimentConfig& cfg, const BatchResult& result) {
  fs::create_directories(dir);
  {
    std::ofstream echo(dir / "config-echo");
    echo << to_ini(cfg);
  }
  const auto task = make_task(cfg);
  const auto& model = task->model();
  for (const auto& rec : result.records) {
    const fs::path ep = episode_dir(dir, rec.episode_index);
    fs::create_directories(ep);
    std::ofstream traj(ep / "trajectory.csv");
    write_trajectory_csv(traj, rec, model.state_names(), model.control_names());
    std::ofstream post(ep / "posterior.csv");
    write_posterior_csv(post, rec, model.param_names());
    std::ofstream pol(ep / "policy.csv");
    write_policy_csv(pol, rec, model.control_names());
  }
  std::ofstream summary(dir / "summary.json");
  summary << result.summary.to_json();
}

ExperimentConfig load_run_config(const fs::path& dir) { return load_config((dir / "config-echo").string()); }

BatchSummary summarize_run(const fs::path& dir) {
  const ExperimentConfig cfg = load_run_config(dir);
  const auto task = make_task(cfg);
  const auto& model = task->model();
  std::vector<EpisodeRecord> records;
  for (const std::int64_t k : episode_indices(dir)) {
    const CsvTable t = read_csv(episode_dir(dir, k) / "trajectory.csv");
    EpisodeRecord rec;
    rec.episode_index = k;
    std::vector<std::size_t> sc;
    std::vector<std::size_t> uc;
    for (const auto& n : model.state_names()) sc.push_back(t.column(n));
    for (const auto& n : model.control_names()) uc.push_back(t.column(n));
    const std::size_t cost_col = t.column("instant_cost");
    const std::size_t crash_col = t.column("crashed");
    for (const auto& row : t.rows) {
      TrajectoryRow r;
      r.step = std::stoll(row[0]);
      r.state.resize(static_cast<Eigen::Index>(sc.size()));
      r.control.resize(static_cast<Eigen::Index>(uc.size()));
      for (std::size_t d = 0; d < sc.size(); ++d) r.state(static_cast<Eigen::Index>(d)) = parse_cell(row[sc[d]]);
      for (std::size_t d = 0; d < uc.size(); ++d) r.control(static_cast<Eigen::Index>(d)) = parse_cell(row[uc[d]]);
      r.instant_cost = parse_cell(row[cost_col]);
      r.crashed = row[crash_col] == "1";
      rec.rows.push_back(std::move(r));
    }
    rec.aborted = static_cast<int>(rec.rows.size()) < cfg.episode_length;
    if (rec.aborted) rec.diagnostic = "episode ended early";
    finish_record(rec, *task);
    records.push_back(std::move(rec));
  }
  return summarize_records(cfg, records);
}

RidgeExport export_ridge(const fs::path& dir, int grid_points) {
  if (grid_points < 2) throw InvalidArgument("export_ridge: need at least two grid points");
  const ExperimentConfig cfg = load_run_config(dir);
  const auto task = make_task(cfg);
  const auto names = task->model().param_names();
  const auto transforms = param_transforms(cfg);
  const auto p = static_cast<Eigen::Index>(names.size());

  RidgeExport out;
  out.particles_csv = dir / "ridge.csv";
  out.grid_csv = dir / "ridge_grid.csv";
  std::ofstream ridge(out.particles_csv);
  std::ofstream grid(out.grid_csv);
  ridge << "episode,step,particle";
  for (const auto& n : names) ridge << ',' << n << ',' << n << "_density";
  ridge << '\n';
  grid << "episode,step,coordinate,value,density\n";

  // Marginal mixture density of coordinate d at physical value x.
  auto density = [&](const Eigen::MatrixXd& enc, const Eigen::VectorXd& var, Eigen::Index d, double x) {
    const bool log = transforms[static_cast<std::size_t>(d)] == Transform::Log;
    if (log && !(x > 0.0)) return 0.0;
    const double e = log ? std::log(x) : x;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < enc.rows(); ++j) {
      const double z = e - enc(j, d);
      acc += std::exp(-0.5 * z * z / var(d));
    }
    acc /= static_cast<double>(enc.rows()) * std::sqrt(2.0 * std::numbers::pi * var(d));
    return log ? acc / x : acc;
  };

  for (const std::int64_t k : episode_indices(dir)) {
    const fs::path file = episode_dir(dir, k) / "posterior.csv";
    if (!fs::exists(file)) continue;
    const CsvTable t = read_csv(file);
    std::vector<std::size_t> cols;
    for (const auto& n : names) cols.push_back(t.column(n));
    std::map<std::int64_t, std::vector<Eigen::VectorXd>> groups;
    for (const auto& row : t.rows) {
      Eigen::VectorXd v(p);
      for (Eigen::Index d = 0; d < p; ++d) v(d) = parse_cell(row[cols[static_cast<std::size_t>(d)]]);
      groups[std::stoll(row[0])].push_back(std::move(v));
    }
    for (const auto& [step, phys] : groups) {
      Eigen::MatrixXd enc(static_cast<Eigen::Index>(phys.size()), p);
      for (std::size_t i = 0; i < phys.size(); ++i) {
        enc.row(static_cast<Eigen::Index>(i)) = encode(phys[i], transforms).transpose();
      }
      const ParticleSet ps(enc);
      Eigen::VectorXd var = fit_gmm_var(ps, cfg.gmm_cov).cwiseMax(1e-12);
      ++out.snapshots;
      for (Eigen::Index i = 0; i < enc.rows(); ++i) {
        ridge << k << ',' << step << ',' << i;
        for (Eigen::Index d = 0; d < p; ++d) {
          const double x = phys[static_cast<std::size_t>(i)](d);
          ridge << ',' << format_number(x) << ',' << format_number(density(enc, var, d, x));
        }
        ridge << '\n';
      }
      for (Eigen::Index d = 0; d < p; ++d) {
        const double sd = std::sqrt(var(d));
        const double lo_e = enc.col(d).minCoeff() - 6.0 * sd;
        const double hi_e = enc.col(d).maxCoeff() + 6.0 * sd;
        const Eigen::VectorXd lo_hi = decode((Eigen::VectorXd(1) << lo_e).finished(),
                                             {transforms[static_cast<std::size_t>(d)]});
        const Eigen::VectorXd hi_v = decode((Eigen::VectorXd(1) << hi_e).finished(),
                                            {transforms[static_cast<std::size_t>(d)]});
        const double lo = lo_hi(0);
        const double hi = hi_v(0);
        for (int g = 0; g < grid_points; ++g) {
          const double x = lo + (hi - lo) * g / (grid_points - 1);
          grid << k << ',' << step << ',' << names[static_cast<std::size_t>(d)] << ',' << format_number(x)
               << ',' << format_number(density(enc, var, d, x)) << '\n';
        }
      }
    }
  }
  if (out.snapshots == 0) spdlog::warn("export_ridge: no posterior snapshots under {}", dir.string());
  return out;
}

}  // namespace dust
