#include "dust/dyn_inference.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dust/bandwidth.hpp"
#include "dust/errors.hpp"

namespace dust {

Eigen::VectorXd fit_gmm_var(const ParticleSet& particles, const GmmCovSpec& spec) {
  const auto p = static_cast<Eigen::Index>(particles.dim());
  switch (spec.rule) {
    case GmmCovRule::Fixed:
      if (spec.fixed_var.size() != p) {
        throw InvalidArgument("fit_gmm_var: fixed covariance has the wrong dimension");
      }
      return spec.fixed_var;
    case GmmCovRule::Silverman:
    case GmmCovRule::Scott:
    case GmmCovRule::ImprovedSheatherJones: {
      if (particles.size() < 2) return Eigen::VectorXd::Constant(p, kBandwidthFloor * kBandwidthFloor);
      Eigen::VectorXd sigma(p);
      if (spec.rule == GmmCovRule::Silverman) {
        sigma = silverman_bandwidth(particles);
      } else if (spec.rule == GmmCovRule::Scott) {
        sigma = scott_bandwidth(particles);
      } else {
        for (Eigen::Index d = 0; d < p; ++d) {
          const Eigen::VectorXd col = particles.points().col(d);
          sigma(d) = isj_bandwidth({col.data(), static_cast<std::size_t>(col.size())});
        }
      }
      return sigma.array().square().matrix();
    }
  }
  throw InvalidArgument("fit_gmm_var: unknown rule");
}

DynPosterior::DynPosterior(ParticleSet particles, Eigen::VectorXd gmm_var, Eigen::VectorXd obs_var,
                           std::vector<Transform> transforms)
    : particles_(std::move(particles)),
      gmm_var_(std::move(gmm_var)),
      obs_var_(std::move(obs_var)),
      transforms_(std::move(transforms)) {
  const auto p = static_cast<Eigen::Index>(particles_.dim());
  if (gmm_var_.size() != p || static_cast<Eigen::Index>(transforms_.size()) != p) {
    throw InvalidArgument("DynPosterior: covariance/transform dimension mismatch");
  }
  if (!(gmm_var_.array() > 0.0).all() || !gmm_var_.allFinite()) {
    throw InvalidArgument("DynPosterior: mixture covariance must be a positive diagonal");
  }
  if (!(obs_var_.array() > 0.0).all() || !obs_var_.allFinite()) {
    throw InvalidArgument("DynPosterior: observation covariance must be a positive diagonal");
  }
}

Eigen::MatrixXd DynPosterior::physical_particles() const {
  Eigen::MatrixXd out(particles_.points().rows(), particles_.points().cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = decode(particles_.points().row(i).transpose(), transforms_).transpose();
  }
  return out;
}

GmmEval gmm_log_density_and_grad(const DynPosterior& post, const Eigen::VectorXd& phi) {
  const auto& centers = post.particles().points();
  const Eigen::Index n = centers.rows();
  const Eigen::Index p = centers.cols();
  if (phi.size() != p) throw InvalidArgument("gmm_log_density_and_grad: dimension mismatch");
  const Eigen::ArrayXd inv_var = post.gmm_var().array().inverse();

  Eigen::VectorXd z(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double q = 0.0;
    for (Eigen::Index d = 0; d < p; ++d) {
      const double diff = phi(d) - centers(j, d);
      q += diff * diff * inv_var(d);
    }
    z(j) = -0.5 * q;
  }
  const double zmax = z.maxCoeff();
  const Eigen::ArrayXd w = (z.array() - zmax).exp();
  const double wsum = w.sum();
  const double log_norm = -0.5 * (2.0 * std::numbers::pi * post.gmm_var().array()).log().sum();

  GmmEval out;
  out.log_density = zmax + std::log(wsum) - std::log(static_cast<double>(n)) + log_norm;
  out.grad = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double r = w(j) / wsum;
    for (Eigen::Index d = 0; d < p; ++d) out.grad(d) += r * (centers(j, d) - phi(d)) * inv_var(d);
  }
  return out;
}

DynPosterior observe(const DynPosterior& prior, const Observation& obs, const DynamicsModel& model,
                     double dt, const DynInferenceConfig& cfg) {
  cfg.svgd.validate();
  if (cfg.svgd.num_steps == 0) return prior;
  if (static_cast<int>(prior.dim()) != model.param_dim()) {
    throw InvalidArgument("observe: posterior dimension does not match the model");
  }

  // q(phi | D_{t-1}) stays fixed for all inner steps of this update.
  const DynPosterior& frozen = prior;
  const ScoreFn score = [&](const Eigen::MatrixXd& x) {
    Eigen::MatrixXd s(x.rows(), x.cols());
    for (Eigen::Index k = 0; k < x.rows(); ++k) {
      const Eigen::VectorXd phi = x.row(k).transpose();
      const ParamVec pv(phi, frozen.transforms());
      Eigen::VectorXd g;
      try {
        g = likelihood_grad_fd(model, obs, pv, frozen.obs_var(), dt);
      } catch (const NumericalFailure& e) {
        throw NumericalFailure(std::string(e.what()) + " (particle " + std::to_string(k) + ")",
                               static_cast<std::size_t>(k));
      }
      s.row(k) = (g + gmm_log_density_and_grad(frozen, phi).grad).transpose();
    }
    return s;
  };

  try {
    ParticleSet moved = svgd_step(prior.particles(), score, cfg.kernel, cfg.svgd);
    Eigen::VectorXd var = fit_gmm_var(moved, cfg.gmm_cov);
    return DynPosterior(std::move(moved), std::move(var), prior.obs_var(), prior.transforms());
  } catch (const NumericalFailure& e) {
    throw NumericalFailure("observe at step " + std::to_string(obs.step_index) + ": " + e.what(),
                           e.index());
  }
}

std::vector<ParamVec> sample_params(const DynPosterior& post, std::size_t count, CounterRng& rng,
                                    SampleFrom from) {
  const auto& centers = post.particles().points();
  const auto n = static_cast<std::size_t>(centers.rows());
  const Eigen::ArrayXd sd = post.gmm_var().array().sqrt();
  std::vector<ParamVec> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
    if (j >= n) j = n - 1;
    Eigen::VectorXd phi = centers.row(static_cast<Eigen::Index>(j)).transpose();
    if (from == SampleFrom::Mixture) {
      for (Eigen::Index d = 0; d < phi.size(); ++d) phi(d) += sd(d) * rng.normal();
    }
    out.emplace_back(std::move(phi), post.transforms());
  }
  return out;
}

std::size_t mode_index(const DynPosterior& post) {
  std::size_t best = 0;
  double best_density = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < post.size(); ++i) {
    const double ld = gmm_log_density_and_grad(post, post.particles().particle(i)).log_density;
    if (ld > best_density) {
      best_density = ld;
      best = i;
    }
  }
  return best;
}

ParamVec mode(const DynPosterior& post) { return post.particle(mode_index(post)); }

}  // namespace dust
