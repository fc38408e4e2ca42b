#include "dust/config.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <numbers>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "dust/errors.hpp"

namespace dust {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw InvalidArgument("config: '" + std::string(key) + "' expects a number, got '" + t + "'");
  }
  return v;
}

long long parse_int(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw InvalidArgument("config: '" + std::string(key) + "' expects an integer, got '" + t + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "yes" || t == "true" || t == "1") return true;
  if (t == "no" || t == "false" || t == "0") return false;
  throw InvalidArgument("config: '" + std::string(key) + "' expects yes/no, got '" + t + "'");
}

Eigen::VectorXd parse_vector(std::string_view key, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<double> vals;
  std::string tok;
  while (in >> tok) vals.push_back(parse_double(key, tok));
  if (vals.empty()) throw InvalidArgument("config: '" + std::string(key) + "' is empty");
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

std::string fmt_vector(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ' ';
    out += fmt_double(v(i));
  }
  return out;
}

// "0: 2.0; 100: 3.0"
std::vector<ScheduleEntry> parse_schedule(std::string_view key, std::string_view text) {
  std::vector<ScheduleEntry> out;
  std::string s(text);
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t end = std::min(s.find(';', pos), s.size());
    const std::string item = trim(std::string_view(s).substr(pos, end - pos));
    if (!item.empty()) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        throw InvalidArgument("config: '" + std::string(key) + "' entries look like 'step: values'");
      }
      out.push_back({parse_int(key, item.substr(0, colon)), parse_vector(key, item.substr(colon + 1))});
    }
    pos = end + 1;
  }
  return out;
}

std::string fmt_schedule(const std::vector<ScheduleEntry>& s) {
  std::string out;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k > 0) out += "; ";
    out += std::to_string(s[k].step) + ": " + fmt_vector(s[k].params);
  }
  return out;
}

BandwidthRule parse_bandwidth(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "median") return BandwidthRule::Median;
  if (t == "silverman") return BandwidthRule::Silverman;
  if (t == "scott") return BandwidthRule::Scott;
  if (t == "isj") return BandwidthRule::ImprovedSheatherJones;
  throw InvalidArgument("config: '" + std::string(key) + "' expects median/silverman/scott/isj");
}

std::string fmt_bandwidth(BandwidthRule r) {
  switch (r) {
    case BandwidthRule::Median: return "median";
    case BandwidthRule::Silverman: return "silverman";
    case BandwidthRule::Scott: return "scott";
    case BandwidthRule::ImprovedSheatherJones: return "isj";
    case BandwidthRule::Fixed: break;
  }
  throw InvalidArgument("config: fixed kernel bandwidths are not configurable");
}

GmmCovRule parse_gmm_rule(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "fixed") return GmmCovRule::Fixed;
  if (t == "silverman") return GmmCovRule::Silverman;
  if (t == "scott") return GmmCovRule::Scott;
  if (t == "isj") return GmmCovRule::ImprovedSheatherJones;
  throw InvalidArgument("config: '" + std::string(key) + "' expects fixed/silverman/scott/isj");
}

std::string fmt_gmm_rule(GmmCovRule r) {
  switch (r) {
    case GmmCovRule::Fixed: return "fixed";
    case GmmCovRule::Silverman: return "silverman";
    case GmmCovRule::Scott: return "scott";
    case GmmCovRule::ImprovedSheatherJones: return "isj";
  }
  return "fixed";
}

PriorKind parse_prior(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "uniform") return PriorKind::Uniform;
  if (t == "normal") return PriorKind::Normal;
  if (t == "lognormal") return PriorKind::LogNormal;
  if (t == "point") return PriorKind::Point;
  throw InvalidArgument("config: '" + std::string(key) + "' expects uniform/normal/lognormal/point");
}

std::string fmt_prior(PriorKind k) {
  switch (k) {
    case PriorKind::Uniform: return "uniform";
    case PriorKind::Normal: return "normal";
    case PriorKind::LogNormal: return "lognormal";
    case PriorKind::Point: return "point";
  }
  return "uniform";
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define DUST_DOUBLE(name, member)                                                        \
  {name, Field{[](ExperimentConfig& c, const std::string& v) { c.member = parse_double(name, v); }, \
               [](const ExperimentConfig& c) { return fmt_double(c.member); }}}
#define DUST_INT(name, member)                                                                      \
  {name, Field{[](ExperimentConfig& c, const std::string& v) {                                      \
                 c.member = static_cast<decltype(c.member)>(parse_int(name, v));                    \
               },                                                                                   \
               [](const ExperimentConfig& c) { return std::to_string(c.member); }}}
#define DUST_VECTOR(name, member)                                                        \
  {name, Field{[](ExperimentConfig& c, const std::string& v) { c.member = parse_vector(name, v); }, \
               [](const ExperimentConfig& c) { return fmt_vector(c.member); }}}
#define DUST_BOOL(name, member)                                                          \
  {name, Field{[](ExperimentConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, \
               [](const ExperimentConfig& c) { return std::string(c.member ? "yes" : "no"); }}}

// Keys of the task section, in echo order.
const std::vector<std::pair<std::string, Field>>& task_fields() {
  static const std::vector<std::pair<std::string, Field>> fields = {
      DUST_DOUBLE("dt", dt),
      DUST_INT("episode_length", episode_length),
      DUST_VECTOR("initial_state", initial_state),
      DUST_DOUBLE("actuator_bound", actuator_bound),
      DUST_DOUBLE("obs_noise_std", obs_noise_std),
      {"latent", Field{[](ExperimentConfig& c, const std::string& v) {
                         const std::string t = trim(v);
                         if (t != "uniform" && t != "schedule") {
                           throw InvalidArgument("config: 'latent' expects uniform/schedule");
                         }
                         c.latent_uniform = t == "uniform";
                       },
                       [](const ExperimentConfig& c) {
                         return std::string(c.latent_uniform ? "uniform" : "schedule");
                       }}},
      DUST_VECTOR("latent_low", latent_low),
      DUST_VECTOR("latent_high", latent_high),
      {"latent_schedule",
       Field{[](ExperimentConfig& c, const std::string& v) {
               c.latent_schedule = parse_schedule("latent_schedule", v);
             },
             [](const ExperimentConfig& c) { return fmt_schedule(c.latent_schedule); }}},
      DUST_DOUBLE("max_speed", pendulum_max_speed),
      DUST_DOUBLE("max_accel", pendulum_max_accel),
      DUST_DOUBLE("wheel_radius", wheel_radius),
      DUST_DOUBLE("axial_distance", axial_distance),
      DUST_DOUBLE("obstacle_radius", obstacle_radius),
      DUST_DOUBLE("obstacle_start", obstacle_start),
      DUST_DOUBLE("obstacle_spacing", obstacle_spacing),
      DUST_DOUBLE("arena_min", arena_min),
      DUST_DOUBLE("arena_max", arena_max),
      DUST_DOUBLE("cost_angle", pendulum_cost.angle_weight),
      DUST_DOUBLE("cost_angular_velocity", pendulum_cost.velocity_weight),
      DUST_DOUBLE("cost_torque", pendulum_cost.torque_weight),
      DUST_DOUBLE("success_cost", pendulum_cost.success_threshold),
      {"goal", Field{[](ExperimentConfig& c, const std::string& v) {
                       const Eigen::VectorXd g = parse_vector("goal", v);
                       if (g.size() != 2) throw InvalidArgument("config: 'goal' needs two values");
                       c.point_mass_cost.goal = g;
                     },
                     [](const ExperimentConfig& c) {
                       return fmt_vector(Eigen::VectorXd(c.point_mass_cost.goal));
                     }}},
      DUST_DOUBLE("cost_error", point_mass_cost.error_weight),
      DUST_DOUBLE("cost_velocity", point_mass_cost.velocity_weight),
      DUST_DOUBLE("cost_control", point_mass_cost.control_weight),
      DUST_DOUBLE("crash_penalty", point_mass_cost.crash_penalty),
      DUST_DOUBLE("cost_terminal_error", point_mass_cost.terminal_error_weight),
      DUST_DOUBLE("cost_terminal_velocity", point_mass_cost.terminal_velocity_weight),
      DUST_DOUBLE("circle_radius", skid_steer_cost.circle_radius),
      DUST_DOUBLE("reference_speed", skid_steer_cost.reference_speed),
      DUST_DOUBLE("cost_speed", skid_steer_cost.speed_weight),
      DUST_DOUBLE("success_distance", skid_steer_cost.success_distance),
      DUST_INT("horizon", horizon),
      DUST_INT("policies", num_policies),
      DUST_INT("action_samples", num_action_samples),
      DUST_INT("dynamics_samples", num_dyn_samples),
      DUST_DOUBLE("alpha", alpha),
      DUST_VECTOR("control_authority", control_authority),
      DUST_VECTOR("action_var", action_var),
      DUST_DOUBLE("policy_step_size", policy_step_size),
      DUST_INT("policy_iterations", policy_iterations),
      {"policy_bandwidth",
       Field{[](ExperimentConfig& c, const std::string& v) {
               c.policy_bandwidth = parse_bandwidth("policy_bandwidth", v);
             },
             [](const ExperimentConfig& c) { return fmt_bandwidth(c.policy_bandwidth); }}},
      DUST_DOUBLE("failure_penalty", failure_penalty),
      DUST_INT("dyn_particles", dyn_particles),
      {"gmm_cov", Field{[](ExperimentConfig& c, const std::string& v) {
                          c.gmm_cov.rule = parse_gmm_rule("gmm_cov", v);
                        },
                        [](const ExperimentConfig& c) { return fmt_gmm_rule(c.gmm_cov.rule); }}},
      {"gmm_var", Field{[](ExperimentConfig& c, const std::string& v) {
                          c.gmm_cov.fixed_var = parse_vector("gmm_var", v);
                        },
                        [](const ExperimentConfig& c) {
                          return c.gmm_cov.fixed_var.size() ? fmt_vector(c.gmm_cov.fixed_var) : std::string();
                        }}},
      DUST_VECTOR("obs_var", obs_var),
      DUST_INT("dyn_steps", dyn_steps),
      DUST_DOUBLE("dyn_step_size", dyn_step_size),
      DUST_BOOL("log_space", log_space),
      {"dyn_bandwidth", Field{[](ExperimentConfig& c, const std::string& v) {
                                c.dyn_bandwidth = parse_bandwidth("dyn_bandwidth", v);
                              },
                              [](const ExperimentConfig& c) { return fmt_bandwidth(c.dyn_bandwidth); }}},
      {"dyn_prior", Field{[](ExperimentConfig& c, const std::string& v) {
                            c.dyn_prior.kind = parse_prior("dyn_prior", v);
                          },
                          [](const ExperimentConfig& c) { return fmt_prior(c.dyn_prior.kind); }}},
      DUST_VECTOR("dyn_prior_low", dyn_prior.low),
      DUST_VECTOR("dyn_prior_high", dyn_prior.high),
      DUST_VECTOR("dyn_prior_center", dyn_prior.center),
      DUST_VECTOR("dyn_prior_scale", dyn_prior.scale),
      DUST_INT("dyn_update_every", dyn_update_every),
      DUST_BOOL("dyn_sample_particles", dyn_sample_particles),
      DUST_VECTOR("point_estimate", point_estimate),
      DUST_INT("mppi_samples", mppi_samples),
      DUST_DOUBLE("mppi_lambda", mppi_lambda),
      DUST_BOOL("mppi_true_params", mppi_true_params),
  };
  return fields;
}

#undef DUST_DOUBLE
#undef DUST_INT
#undef DUST_VECTOR
#undef DUST_BOOL

void require_size(const Eigen::VectorXd& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw InvalidArgument(std::string("config: '") + what + "' needs " + std::to_string(n) + " values");
  }
}

void require_positive(const Eigen::VectorXd& v, Eigen::Index n, const char* what) {
  require_size(v, n, what);
  if (!v.allFinite() || !(v.array() > 0.0).all()) {
    throw InvalidArgument(std::string("config: '") + what + "' must be positive");
  }
}

int state_dim(TaskKind t) { return t == TaskKind::Pendulum ? 2 : t == TaskKind::PointMass ? 4 : 3; }
int control_dim(TaskKind t) { return t == TaskKind::Pendulum ? 1 : 2; }
int param_dim(TaskKind t) { return t == TaskKind::Pendulum ? 2 : 1; }

Eigen::VectorXd v1(double a) { return Eigen::VectorXd::Constant(1, a); }
Eigen::VectorXd v2(double a, double b) { return (Eigen::VectorXd(2) << a, b).finished(); }

}  // namespace

std::string_view to_string(ControllerKind kind) noexcept {
  switch (kind) {
    case ControllerKind::Dust: return "dust";
    case ControllerKind::Svmpc: return "svmpc";
    case ControllerKind::Mppi: return "mppi";
  }
  return "unknown";
}

ControllerKind parse_controller(std::string_view name) {
  if (name == "dust") return ControllerKind::Dust;
  if (name == "svmpc") return ControllerKind::Svmpc;
  if (name == "mppi") return ControllerKind::Mppi;
  throw InvalidArgument("unknown controller '" + std::string(name) + "'");
}

Eigen::VectorXd ParamPrior::sample(CounterRng& rng, int dim) const {
  Eigen::VectorXd out(dim);
  for (int d = 0; d < dim; ++d) {
    switch (kind) {
      case PriorKind::Uniform: out(d) = low(d) + (high(d) - low(d)) * rng.uniform(); break;
      case PriorKind::Normal: out(d) = center(d) + scale(d) * rng.normal(); break;
      case PriorKind::LogNormal: out(d) = center(d) * std::exp(scale(d) * rng.normal()); break;
      case PriorKind::Point: out(d) = center(d); break;
    }
  }
  return out;
}

ExperimentConfig default_config(TaskKind task) {
  ExperimentConfig c;
  c.task = task;
  switch (task) {
    case TaskKind::Pendulum:
      c.dt = 0.05;
      c.episode_length = 200;
      c.initial_state = v2(3.0, 0.0);
      c.actuator_bound = 2.0;
      c.latent_uniform = true;
      c.latent_low = v2(0.5, 0.5);
      c.latent_high = v2(1.5, 1.5);
      c.latent_schedule = {{0, v2(1.0, 1.0)}};
      c.horizon = 20;
      c.num_policies = 3;
      c.num_action_samples = 32;
      c.num_dyn_samples = 8;
      c.control_authority = v1(4.0);
      c.action_var = v1(4.0);
      c.policy_step_size = 2.0;
      c.gmm_cov = GmmCovSpec::with_rule(GmmCovRule::ImprovedSheatherJones);
      c.obs_var = Eigen::VectorXd::Constant(2, 0.01);
      c.dyn_steps = 20;
      c.dyn_step_size = 0.001;
      c.log_space = false;
      c.dyn_prior = {PriorKind::Uniform, v2(0.5, 0.5), v2(1.5, 1.5), v2(1.0, 1.0), v2(0.0, 0.0)};
      c.point_estimate = v2(1.0, 1.0);
      break;
    case TaskKind::PointMass:
      c.dt = 0.05;
      c.episode_length = 200;
      c.initial_state = (Eigen::VectorXd(4) << 0.5, 0.5, 0.0, 0.0).finished();
      c.actuator_bound = 10.0;
      c.latent_uniform = false;
      c.latent_low = v1(2.0);
      c.latent_high = v1(2.0);
      c.latent_schedule = {{0, v1(2.0)}, {100, v1(3.0)}};
      c.horizon = 40;
      c.num_policies = 6;
      c.num_action_samples = 64;
      c.num_dyn_samples = 4;
      c.control_authority = v2(25.0, 25.0);
      c.action_var = v2(25.0, 25.0);
      c.policy_step_size = 100.0;
      c.gmm_cov = GmmCovSpec::fixed(v1(0.0625));
      c.obs_var = Eigen::VectorXd::Constant(4, 0.01);
      c.dyn_steps = 20;
      c.dyn_step_size = 0.01;
      c.log_space = true;
      c.dyn_prior = {PriorKind::LogNormal, v1(1.0), v1(4.0), v1(2.0), v1(0.5)};
      c.point_estimate = v1(2.0);
      break;
    case TaskKind::SkidSteer:
      c.dt = 0.1;
      c.episode_length = 400;
      c.initial_state = (Eigen::VectorXd(3) << 1.0, 0.0, std::numbers::pi / 2).finished();
      c.actuator_bound = 10.0;
      c.latent_uniform = false;
      c.latent_low = v1(0.3);
      c.latent_high = v1(0.3);
      c.latent_schedule = {{0, v1(0.3)}, {200, v1(0.45)}};
      c.horizon = 20;
      c.num_policies = 2;
      c.num_action_samples = 50;
      c.num_dyn_samples = 4;
      c.control_authority = v2(0.01, 0.01);
      c.action_var = v2(1.0, 1.0);
      c.policy_step_size = 0.02;
      c.gmm_cov = GmmCovSpec::fixed(v1(0.0625 * 0.0625));
      c.obs_var = Eigen::VectorXd::Constant(3, 0.01);
      c.dyn_steps = 5;
      c.dyn_step_size = 0.05;
      c.log_space = false;
      c.dyn_prior = {PriorKind::Normal, v1(0.0), v1(1.0), v1(0.5), v1(0.2)};
      c.point_estimate = v1(0.5);
      break;
  }
  if (c.gmm_cov.fixed_var.size() == 0) c.gmm_cov.fixed_var = Eigen::VectorXd::Constant(param_dim(task), 0.01);
  return c;
}

void ExperimentConfig::validate() const {
  const int sd = state_dim(task);
  const int ud = control_dim(task);
  const int pd = param_dim(task);
  if (episodes < 1) throw InvalidArgument("config: 'episodes' must be at least 1");
  if (workers < 1 || rollout_workers < 1) throw InvalidArgument("config: worker counts must be at least 1");
  if (!(dt > 0.0)) throw InvalidArgument("config: 'dt' must be positive");
  if (episode_length < 1) throw InvalidArgument("config: 'episode_length' must be at least 1");
  require_size(initial_state, sd, "initial_state");
  if (!(actuator_bound > 0.0)) throw InvalidArgument("config: 'actuator_bound' must be positive");
  if (!(obs_noise_std >= 0.0)) throw InvalidArgument("config: 'obs_noise_std' must be non-negative");
  if (latent_uniform) {
    require_size(latent_low, pd, "latent_low");
    require_size(latent_high, pd, "latent_high");
    if (!(latent_low.array() <= latent_high.array()).all()) {
      throw InvalidArgument("config: 'latent_low' must not exceed 'latent_high'");
    }
  } else {
    LatentSchedule check(latent_schedule);
    require_size(latent_schedule.front().params, pd, "latent_schedule");
  }
  if (horizon < 1 || num_policies < 1 || num_action_samples < 1 || num_dyn_samples < 1) {
    throw InvalidArgument("config: horizon, policies and sample counts must be at least 1");
  }
  if (!(alpha > 0.0)) throw InvalidArgument("config: 'alpha' must be positive");
  require_positive(control_authority, ud, "control_authority");
  require_positive(action_var, ud, "action_var");
  if (policy_iterations < 1) throw InvalidArgument("config: 'policy_iterations' must be at least 1");
  if (!(policy_step_size >= 0.0)) throw InvalidArgument("config: 'policy_step_size' must be non-negative");
  if (!(failure_penalty > 0.0)) throw InvalidArgument("config: 'failure_penalty' must be positive");
  if (dyn_particles < 1) throw InvalidArgument("config: 'dyn_particles' must be at least 1");
  if (gmm_cov.rule == GmmCovRule::Fixed) require_positive(gmm_cov.fixed_var, pd, "gmm_var");
  require_positive(obs_var, sd, "obs_var");
  if (dyn_steps < 0) throw InvalidArgument("config: 'dyn_steps' must be non-negative");
  if (!(dyn_step_size > 0.0)) throw InvalidArgument("config: 'dyn_step_size' must be positive");
  if (dyn_update_every < 1) throw InvalidArgument("config: 'dyn_update_every' must be at least 1");
  switch (dyn_prior.kind) {
    case PriorKind::Uniform:
      require_size(dyn_prior.low, pd, "dyn_prior_low");
      require_size(dyn_prior.high, pd, "dyn_prior_high");
      break;
    case PriorKind::Normal:
    case PriorKind::LogNormal:
      require_size(dyn_prior.center, pd, "dyn_prior_center");
      require_size(dyn_prior.scale, pd, "dyn_prior_scale");
      break;
    case PriorKind::Point:
      require_size(dyn_prior.center, pd, "dyn_prior_center");
      break;
  }
  if (log_space && dyn_prior.kind == PriorKind::LogNormal && !(dyn_prior.center.array() > 0.0).all()) {
    throw InvalidArgument("config: log-normal prior needs a positive center");
  }
  require_size(point_estimate, pd, "point_estimate");
  if (mppi_samples < 1 || !(mppi_lambda > 0.0)) {
    throw InvalidArgument("config: MPPI needs samples >= 1 and lambda > 0");
  }
}

ExperimentConfig parse_config(std::string_view text) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  const auto exp = tree.get_child_optional("experiment");
  if (!exp) throw InvalidArgument("config: missing [experiment] section");
  const auto task_name = exp->get_optional<std::string>("task");
  if (!task_name) throw InvalidArgument("config: [experiment] needs a 'task'");
  ExperimentConfig cfg = default_config(parse_task_kind(trim(*task_name)));

  for (const auto& [key, node] : *exp) {
    const std::string v = node.get_value<std::string>();
    if (key == "task") continue;
    if (key == "controller") cfg.controller = parse_controller(trim(v));
    else if (key == "episodes") cfg.episodes = static_cast<int>(parse_int(key, v));
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, v));
    else if (key == "workers") cfg.workers = static_cast<int>(parse_int(key, v));
    else if (key == "rollout_workers") cfg.rollout_workers = static_cast<int>(parse_int(key, v));
    else if (key == "output") cfg.output = trim(v);
    else if (key == "replay") cfg.replay = trim(v);
    else throw InvalidArgument("config: unknown key '" + key + "' in [experiment]");
  }

  const std::string section(to_string(cfg.task));
  for (const auto& [name, node] : tree) {
    if (name != "experiment" && name != "pendulum" && name != "point_mass" && name != "skid_steer") {
      throw InvalidArgument("config: unknown section [" + name + "]");
    }
  }
  if (const auto sec = tree.get_child_optional(section)) {
    std::map<std::string, const Field*> lookup;
    for (const auto& [k, f] : task_fields()) lookup[k] = &f;
    for (const auto& [key, node] : *sec) {
      const auto it = lookup.find(key);
      if (it == lookup.end()) throw InvalidArgument("config: unknown key '" + key + "' in [" + section + "]");
      const std::string v = node.get_value<std::string>();
      if (trim(v).empty()) continue;
      it->second->set(cfg, v);
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_ini(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[experiment]\n";
  out << "task = " << to_string(cfg.task) << "\n";
  out << "controller = " << to_string(cfg.controller) << "\n";
  out << "episodes = " << cfg.episodes << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "workers = " << cfg.workers << "\n";
  out << "rollout_workers = " << cfg.rollout_workers << "\n";
  out << "output = " << cfg.output << "\n";
  if (!cfg.replay.empty()) out << "replay = " << cfg.replay << "\n";
  out << "\n[" << to_string(cfg.task) << "]\n";
  for (const auto& [key, field] : task_fields()) {
    const std::string v = field.get(cfg);
    if (!v.empty()) out << key << " = " << v << "\n";
  }
  return out.str();
}

std::shared_ptr<const Task> make_task(const ExperimentConfig& cfg) {
  switch (cfg.task) {
    case TaskKind::Pendulum:
      return std::make_shared<PendulumTask>(cfg.dt, cfg.actuator_bound, cfg.pendulum_max_speed,
                                            cfg.pendulum_max_accel, cfg.pendulum_cost);
    case TaskKind::PointMass:
      return std::make_shared<PointMassTask>(
          cfg.dt, cfg.actuator_bound,
          ObstacleGrid::four_by_four(cfg.obstacle_start, cfg.obstacle_spacing, cfg.obstacle_radius,
                                     cfg.arena_min, cfg.arena_max),
          cfg.point_mass_cost);
    case TaskKind::SkidSteer:
      return std::make_shared<SkidSteerTask>(cfg.dt, cfg.wheel_radius, cfg.axial_distance,
                                             cfg.actuator_bound, cfg.skid_steer_cost);
  }
  throw InvalidArgument("make_task: unknown task");
}

std::vector<Transform> param_transforms(const ExperimentConfig& cfg) {
  return std::vector<Transform>(static_cast<std::size_t>(param_dim(cfg.task)),
                                cfg.log_space ? Transform::Log : Transform::Identity);
}

LatentSchedule make_schedule(const ExperimentConfig& cfg, const StreamKey& episode_key) {
  if (!cfg.latent_uniform) return LatentSchedule(cfg.latent_schedule);
  CounterRng rng = episode_key.with(Role::LatentInit).stream();
  Eigen::VectorXd p(cfg.latent_low.size());
  for (Eigen::Index d = 0; d < p.size(); ++d) {
    p(d) = cfg.latent_low(d) + (cfg.latent_high(d) - cfg.latent_low(d)) * rng.uniform();
  }
  return LatentSchedule({{0, p}});
}

DynPosterior initial_posterior(const ExperimentConfig& cfg, const StreamKey& episode_key) {
  const int pd = param_dim(cfg.task);
  const auto transforms = param_transforms(cfg);
  CounterRng rng = episode_key.with(Role::DynamicsInit).stream();
  Eigen::MatrixXd particles(cfg.dyn_particles, pd);
  for (int i = 0; i < cfg.dyn_particles; ++i) {
    particles.row(i) = encode(cfg.dyn_prior.sample(rng, pd), transforms).transpose();
  }
  ParticleSet ps(std::move(particles));
  Eigen::VectorXd var = fit_gmm_var(ps, cfg.gmm_cov);
  return DynPosterior(std::move(ps), std::move(var), cfg.obs_var, transforms);
}

DynInferenceConfig dyn_inference_config(const ExperimentConfig& cfg) {
  DynInferenceConfig d;
  d.svgd = SvgdConfig{cfg.dyn_step_size, cfg.dyn_steps};
  d.kernel = KernelSpec::with_rule(cfg.dyn_bandwidth);
  d.gmm_cov = cfg.gmm_cov;
  return d;
}

PlannerConfig planner_config(const ExperimentConfig& cfg) {
  PlannerConfig p;
  p.horizon = cfg.horizon;
  p.num_policies = cfg.num_policies;
  p.hyper.action_var = cfg.action_var;
  p.hyper.prior_var = cfg.control_authority;
  p.hyper.alpha = cfg.alpha;
  p.hyper.num_action_samples = cfg.num_action_samples;
  p.hyper.num_dyn_samples = cfg.controller == ControllerKind::Dust ? cfg.num_dyn_samples : 1;
  p.init_var = cfg.control_authority;
  p.step_size = cfg.policy_step_size;
  p.iterations = cfg.policy_iterations;
  p.kernel = KernelSpec::with_rule(cfg.policy_bandwidth);
  p.failure_penalty = cfg.failure_penalty;
  p.workers = cfg.rollout_workers;
  return p;
}

MppiConfig mppi_config(const ExperimentConfig& cfg) {
  MppiConfig m;
  m.horizon = cfg.horizon;
  m.num_samples = cfg.mppi_samples;
  m.lambda = cfg.mppi_lambda;
  m.action_var = cfg.action_var;
  m.failure_penalty = cfg.failure_penalty;
  m.workers = cfg.rollout_workers;
  return m;
}

}  // namespace dust
