#include "dust/svgd.hpp"

#include <cmath>
#include <string>

#include "dust/bandwidth.hpp"
#include "dust/errors.hpp"

namespace dust {
namespace {

void require_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite input");
}

Eigen::VectorXd per_dimension_isj(const ParticleSet& ps) {
  Eigen::VectorXd sigma(static_cast<Eigen::Index>(ps.dim()));
  for (Eigen::Index d = 0; d < sigma.size(); ++d) {
    const Eigen::VectorXd col = ps.points().col(d);
    sigma(d) = isj_bandwidth(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
  }
  return sigma;
}

}  // namespace

ParticleSet::ParticleSet(Eigen::MatrixXd points) : points_(std::move(points)) {
  if (points_.rows() < 1 || points_.cols() < 1) {
    throw InvalidArgument("ParticleSet: need at least one particle of dimension >= 1");
  }
  if (!points_.allFinite()) throw InvalidArgument("ParticleSet: non-finite coordinate");
}

Eigen::VectorXd ParticleSet::mean() const { return points_.colwise().mean().transpose(); }

void SvgdConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw InvalidArgument("SvgdConfig: step size must be positive and finite");
  }
  if (num_steps < 0) throw InvalidArgument("SvgdConfig: negative number of steps");
}

KernelEval rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double h) {
  if (x.size() != y.size()) throw InvalidArgument("rbf_kernel: dimension mismatch");
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("rbf_kernel: bandwidth must be positive");
  require_finite(x, "rbf_kernel");
  require_finite(y, "rbf_kernel");
  const Eigen::VectorXd diff = x - y;
  const double value = std::exp(-diff.squaredNorm() / h);
  return {value, (-2.0 / h) * value * diff};
}

KernelEval rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& h) {
  if (x.size() != y.size() || h.size() != x.size()) {
    throw InvalidArgument("rbf_kernel: dimension mismatch");
  }
  if (!((h.array() > 0.0).all()) || !h.allFinite()) {
    throw InvalidArgument("rbf_kernel: bandwidth must be positive");
  }
  require_finite(x, "rbf_kernel");
  require_finite(y, "rbf_kernel");
  const Eigen::ArrayXd diff = (x - y).array();
  const double value = std::exp(-(diff.square() / h.array()).sum());
  return {value, ((-2.0 * value) * diff / h.array()).matrix()};
}

Eigen::VectorXd resolve_bandwidth(const ParticleSet& ps, const KernelSpec& spec) {
  const auto p = static_cast<Eigen::Index>(ps.dim());
  switch (spec.rule) {
    case BandwidthRule::Fixed:
      if (!(spec.fixed_bandwidth > 0.0) || !std::isfinite(spec.fixed_bandwidth)) {
        throw InvalidArgument("KernelSpec: fixed bandwidth must be positive");
      }
      return Eigen::VectorXd::Constant(p, spec.fixed_bandwidth);
    case BandwidthRule::Median:
      return Eigen::VectorXd::Constant(p, median_bandwidth(ps));
    case BandwidthRule::Silverman:
    case BandwidthRule::Scott:
    case BandwidthRule::ImprovedSheatherJones: {
      if (ps.size() < 2) return Eigen::VectorXd::Constant(p, kBandwidthFloor);
      Eigen::VectorXd sigma = spec.rule == BandwidthRule::Silverman ? silverman_bandwidth(ps)
                              : spec.rule == BandwidthRule::Scott   ? scott_bandwidth(ps)
                                                                    : per_dimension_isj(ps);
      return (2.0 * sigma.array().square()).cwiseMax(kBandwidthFloor).matrix();
    }
  }
  throw InvalidArgument("KernelSpec: unknown bandwidth rule");
}

Eigen::MatrixXd phi_star(const ParticleSet& ps, const Eigen::MatrixXd& scores,
                         const KernelSpec& kernel) {
  return phi_star(ps, scores, resolve_bandwidth(ps, kernel));
}

Eigen::MatrixXd phi_star(const ParticleSet& ps, const Eigen::MatrixXd& scores,
                         const Eigen::VectorXd& bandwidth) {
  const auto& x = ps.points();
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (scores.rows() != n || scores.cols() != p) {
    throw InvalidArgument("phi_star: scores must be n x p matching the particles");
  }
  if (bandwidth.size() != p) throw InvalidArgument("phi_star: bandwidth dimension mismatch");
  if (!scores.allFinite()) throw InvalidArgument("phi_star: non-finite score");

  const Eigen::ArrayXd inv_h = bandwidth.array().inverse();
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(n, p);
  // Fixed j-order accumulation keeps the result bitwise reproducible.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double sq = 0.0;
      for (Eigen::Index d = 0; d < p; ++d) {
        const double diff = x(j, d) - x(i, d);
        sq += diff * diff * inv_h(d);
      }
      const double k = std::exp(-sq);
      // grad_{x_j} k(x_j, x_i) = -2 (x_j - x_i) / h * k
      for (Eigen::Index d = 0; d < p; ++d) {
        phi(i, d) += k * scores(j, d) - 2.0 * k * (x(j, d) - x(i, d)) * inv_h(d);
      }
    }
  }
  phi /= static_cast<double>(n);
  return phi;
}

ParticleSet svgd_step(const ParticleSet& ps, const ScoreFn& score_fn, const KernelSpec& kernel,
                      const SvgdConfig& cfg) {
  cfg.validate();
  if (cfg.num_steps == 0) return ps;

  Eigen::MatrixXd x = ps.points();
  for (int step = 0; step < cfg.num_steps; ++step) {
    const Eigen::MatrixXd scores = score_fn(x);
    if (scores.rows() != x.rows() || scores.cols() != x.cols()) {
      throw InvalidArgument("svgd_step: score function returned wrong shape");
    }
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      if (!scores.row(i).allFinite()) {
        throw NumericalFailure("svgd_step: non-finite score at particle " + std::to_string(i),
                               static_cast<std::size_t>(i));
      }
    }
    const ParticleSet current(x);
    x += cfg.step_size * phi_star(current, scores, resolve_bandwidth(current, kernel));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (!x.row(i).allFinite()) {
        throw NumericalFailure("svgd_step: particle " + std::to_string(i) + " diverged",
                               static_cast<std::size_t>(i));
      }
    }
  }
  return ParticleSet(std::move(x));
}

}  // namespace dust
