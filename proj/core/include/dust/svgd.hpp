#pragma once

#include <cstddef>
#include <functional>
#include <variant>

#include <Eigen/Core>

namespace dust {

/// Ordered, equal-weight particles stored one per row (n x p).
class ParticleSet {
 public:
  ParticleSet() = default;
  /// Throws InvalidArgument on an empty matrix or non-finite coordinates.
  explicit ParticleSet(Eigen::MatrixXd points);

  std::size_t size() const noexcept { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points_.cols()); }

  const Eigen::MatrixXd& points() const noexcept { return points_; }
  Eigen::VectorXd particle(std::size_t i) const { return points_.row(static_cast<Eigen::Index>(i)).transpose(); }

  Eigen::VectorXd mean() const;

  friend bool operator==(const ParticleSet& a, const ParticleSet& b) {
    return a.points_.rows() == b.points_.rows() && a.points_.cols() == b.points_.cols() &&
           a.points_ == b.points_;
  }

 private:
  Eigen::MatrixXd points_;
};

enum class BandwidthRule { Fixed, Median, Silverman, Scott, ImprovedSheatherJones };

/// RBF kernel k(x, y) = exp(-sum_d (x_d - y_d)^2 / h_d). A rule is resolved
/// against the current particles each time it is needed.
struct KernelSpec {
  BandwidthRule rule = BandwidthRule::Median;
  double fixed_bandwidth = 1.0;

  static KernelSpec fixed(double h) { return {BandwidthRule::Fixed, h}; }
  static KernelSpec with_rule(BandwidthRule r) { return {r, 1.0}; }
};

struct SvgdConfig {
  double step_size = 0.1;
  int num_steps = 1;

  void validate() const;
};

struct KernelEval {
  double value;
  Eigen::VectorXd grad_x;
};

/// k(x, y) = exp(-||x - y||^2 / h) and its gradient in x.
KernelEval rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double h);

/// Diagonal-bandwidth variant; h holds one squared length scale per dimension.
KernelEval rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& h);

/// Per-dimension squared length scales for `spec` evaluated on `ps`.
/// Standard-deviation rules (Silverman, Scott, ISJ) map sigma to h = 2 sigma^2.
Eigen::VectorXd resolve_bandwidth(const ParticleSet& ps, const KernelSpec& spec);

/// Stein velocity field evaluated at every particle:
/// phi(x_i) = 1/n sum_j [k(x_j, x_i) score_j + grad_{x_j} k(x_j, x_i)].
Eigen::MatrixXd phi_star(const ParticleSet& ps, const Eigen::MatrixXd& scores,
                         const KernelSpec& kernel);
Eigen::MatrixXd phi_star(const ParticleSet& ps, const Eigen::MatrixXd& scores,
                         const Eigen::VectorXd& bandwidth);

/// Maps the current particle matrix (n x p) to scores (n x p).
using ScoreFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

/// Runs cfg.num_steps updates x_i <- x_i + eps phi(x_i), re-evaluating the
/// scores and any rule-based bandwidth at each iteration.
/// Throws NumericalFailure naming the particle if a score is non-finite.
ParticleSet svgd_step(const ParticleSet& ps, const ScoreFn& score_fn,
                      const KernelSpec& kernel, const SvgdConfig& cfg);

}  // namespace dust
