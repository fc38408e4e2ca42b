#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "dust/models.hpp"
#include "dust/observation.hpp"
#include "dust/rng.hpp"
#include "dust/svgd.hpp"

namespace dust {

enum class GmmCovRule { Fixed, Silverman, Scott, ImprovedSheatherJones };

/// How the mixture covariance Sigma_s is chosen after each update.
struct GmmCovSpec {
  GmmCovRule rule = GmmCovRule::Fixed;
  Eigen::VectorXd fixed_var;  // diagonal, used when rule == Fixed

  static GmmCovSpec fixed(Eigen::VectorXd var) { return {GmmCovRule::Fixed, std::move(var)}; }
  static GmmCovSpec with_rule(GmmCovRule r) { return {r, {}}; }
};

/// Diagonal Sigma_s for `particles` under `spec` (rules give sigma_d^2).
Eigen::VectorXd fit_gmm_var(const ParticleSet& particles, const GmmCovSpec& spec);

/// Particle approximation of q(phi | D_t) in encoded coordinates, with the
/// equal-weight Gaussian mixture used as its density.
class DynPosterior {
 public:
  DynPosterior(ParticleSet particles, Eigen::VectorXd gmm_var, Eigen::VectorXd obs_var,
               std::vector<Transform> transforms);

  const ParticleSet& particles() const noexcept { return particles_; }
  const Eigen::VectorXd& gmm_var() const noexcept { return gmm_var_; }
  const Eigen::VectorXd& obs_var() const noexcept { return obs_var_; }
  const std::vector<Transform>& transforms() const noexcept { return transforms_; }
  std::size_t size() const noexcept { return particles_.size(); }
  std::size_t dim() const noexcept { return particles_.dim(); }

  ParamVec particle(std::size_t i) const { return ParamVec(particles_.particle(i), transforms_); }
  /// n x p matrix of decoded (physical) particle coordinates.
  Eigen::MatrixXd physical_particles() const;

  friend bool operator==(const DynPosterior& a, const DynPosterior& b) {
    return a.particles_ == b.particles_ && a.gmm_var_ == b.gmm_var_ && a.obs_var_ == b.obs_var_ &&
           a.transforms_ == b.transforms_;
  }

 private:
  ParticleSet particles_;
  Eigen::VectorXd gmm_var_;
  Eigen::VectorXd obs_var_;
  std::vector<Transform> transforms_;
};

struct GmmEval {
  double log_density;
  Eigen::VectorXd grad;
};

/// log[(1/n) sum_j N(phi; phi_j, Sigma_s)] and its gradient, via log-sum-exp.
/// `phi` is in encoded coordinates.
GmmEval gmm_log_density_and_grad(const DynPosterior& post, const Eigen::VectorXd& phi);

struct DynInferenceConfig {
  SvgdConfig svgd{0.01, 20};
  KernelSpec kernel = KernelSpec::with_rule(BandwidthRule::Median);
  GmmCovSpec gmm_cov;
};

/// One sequential update: svgd.num_steps Stein steps against the transition
/// likelihood of `obs` times the (frozen) mixture density of `prior`, then a
/// refit of Sigma_s. Depends on nothing but its arguments.
DynPosterior observe(const DynPosterior& prior, const Observation& obs, const DynamicsModel& model,
                     double dt, const DynInferenceConfig& cfg);

enum class SampleFrom { Mixture, Particles };

/// i.i.d. draws: uniform component, then N(phi_j, Sigma_s) for Mixture or
/// phi_j itself for Particles.
std::vector<ParamVec> sample_params(const DynPosterior& post, std::size_t count, CounterRng& rng,
                                    SampleFrom from = SampleFrom::Mixture);

/// Particle of highest mixture density; ties go to the lowest index.
ParamVec mode(const DynPosterior& post);
std::size_t mode_index(const DynPosterior& post);

}  // namespace dust
