#include "dust/bandwidth.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <vector>

#include <boost/math/tools/toms748_solve.hpp>
#include <fftw3.h>
#include <spdlog/spdlog.h>

#include "dust/errors.hpp"
#include "dust/svgd.hpp"

namespace dust {
namespace {

Eigen::VectorXd sample_std(const Eigen::MatrixXd& x) {
  const auto n = static_cast<double>(x.rows());
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  return (centered.array().square().colwise().sum() / (n - 1.0)).sqrt().transpose();
}

Eigen::VectorXd scaled_std(const ParticleSet& ps, double factor) {
  Eigen::VectorXd sigma = sample_std(ps.points()) * factor;
  return sigma.cwiseMax(kBandwidthFloor);
}

// plan creation in FFTW is not thread-safe; execution is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// DCT-II without normalisation: y_k = 2 sum_j x_j cos(pi k (2j + 1) / 2n).
std::vector<double> dct2(const std::vector<double>& input) {
  const int n = static_cast<int>(input.size());
  double* in = fftw_alloc_real(static_cast<std::size_t>(n));
  double* out = fftw_alloc_real(static_cast<std::size_t>(n));
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_r2r_1d(n, in, out, FFTW_REDFT10, FFTW_ESTIMATE);
  }
  std::copy(input.begin(), input.end(), in);
  fftw_execute(plan);
  std::vector<double> result(out, out + n);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return result;
}

class IsjFixedPoint {
 public:
  static constexpr int kOrder = 7;

  IsjFixedPoint(const std::vector<double>& i_sq, std::vector<double> a2, double n)
      : i_sq_(i_sq), a2_(std::move(a2)), n_(n) {
    // I^s * a2 for s = 2..7; only the exponential depends on t.
    weighted_.resize(kOrder + 1);
    for (int s = 2; s <= kOrder; ++s) {
      auto& w = weighted_[static_cast<std::size_t>(s)];
      w.resize(i_sq_.size());
      for (std::size_t k = 0; k < i_sq_.size(); ++k) w[k] = std::pow(i_sq_[k], s) * a2_[k];
    }
  }

  double operator()(double t) const {
    double f = functional(kOrder, t);
    for (int s = kOrder - 1; s >= 2; --s) {
      double k0 = 1.0;
      for (int j = 1; j <= 2 * s - 1; j += 2) k0 *= j;
      k0 /= std::sqrt(2.0 * std::numbers::pi);
      const double c = (1.0 + std::pow(0.5, s + 0.5)) / 3.0;
      const double time = std::pow(2.0 * c * k0 / n_ / f, 2.0 / (3.0 + 2.0 * s));
      f = functional(s, time);
    }
    return t - std::pow(2.0 * n_ * std::sqrt(std::numbers::pi) * f, -0.4);
  }

 private:
  double functional(int s, double t) const {
    const double pi2 = std::numbers::pi * std::numbers::pi;
    const auto& w = weighted_[static_cast<std::size_t>(s)];
    double sum = 0.0;
    for (std::size_t k = 0; k < i_sq_.size(); ++k) sum += w[k] * std::exp(-i_sq_[k] * pi2 * t);
    return 2.0 * std::pow(std::numbers::pi, 2 * s) * sum;
  }

  std::vector<double> i_sq_;
  std::vector<double> a2_;
  std::vector<std::vector<double>> weighted_;
  double n_;
};

}  // namespace

double median_bandwidth(const ParticleSet& ps) {
  const auto& x = ps.points();
  const auto n = x.rows();
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dists.push_back((x.row(i) - x.row(j)).norm());
    }
  }
  if (dists.empty()) return kBandwidthFloor;
  std::sort(dists.begin(), dists.end());
  const std::size_t m = dists.size();
  const double med = (m % 2 == 1) ? dists[m / 2] : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
  if (med <= 0.0) return kBandwidthFloor;
  const double h = med * med / std::log(static_cast<double>(n) + 1.0);
  return std::max(h, kBandwidthFloor);
}

Eigen::VectorXd silverman_bandwidth(const ParticleSet& ps) {
  if (ps.size() < 2) throw InsufficientData("silverman_bandwidth: need at least 2 particles");
  const double n = static_cast<double>(ps.size());
  const double p = static_cast<double>(ps.dim());
  return scaled_std(ps, std::pow(4.0 / ((p + 2.0) * n), 1.0 / (p + 4.0)));
}

Eigen::VectorXd scott_bandwidth(const ParticleSet& ps) {
  if (ps.size() < 2) throw InsufficientData("scott_bandwidth: need at least 2 particles");
  const double n = static_cast<double>(ps.size());
  const double p = static_cast<double>(ps.dim());
  return scaled_std(ps, std::pow(n, -1.0 / (p + 4.0)));
}

double silverman_1d(std::span<const double> samples) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(samples.size()), 1);
  for (std::size_t i = 0; i < samples.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = samples[i];
  return silverman_bandwidth(ParticleSet(std::move(x)))(0);
}

double isj_bandwidth(std::span<const double> samples) {
  constexpr std::size_t kMinDistinct = 8;
  constexpr int kGrid = 1 << 12;

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = static_cast<std::size_t>(
      std::distance(sorted.begin(), std::unique(sorted.begin(), sorted.end())));
  if (distinct < kMinDistinct) {
    spdlog::debug("isj_bandwidth: {} distinct values, using Silverman", distinct);
    return silverman_1d(samples);
  }

  const double lo_data = sorted.front();
  const double hi_data = sorted[distinct - 1];
  const double range = hi_data - lo_data;
  const double lo = lo_data - range / 10.0;
  const double span_r = range * 1.2;

  std::vector<double> hist(kGrid, 0.0);
  for (double v : samples) {
    auto idx = static_cast<long>(std::floor((v - lo) / span_r * kGrid));
    idx = std::clamp(idx, 0L, static_cast<long>(kGrid - 1));
    hist[static_cast<std::size_t>(idx)] += 1.0;
  }
  const double total = static_cast<double>(samples.size());
  for (double& h : hist) h /= total;

  const std::vector<double> a = dct2(hist);
  std::vector<double> i_sq(kGrid - 1);
  std::vector<double> a2(kGrid - 1);
  for (int k = 1; k < kGrid; ++k) {
    i_sq[static_cast<std::size_t>(k - 1)] = static_cast<double>(k) * k;
    const double half = a[static_cast<std::size_t>(k)] / 2.0;
    a2[static_cast<std::size_t>(k - 1)] = half * half;
  }

  const IsjFixedPoint fixed_point(i_sq, std::move(a2), total);
  const double t_lo = 0.0;
  const double t_hi = 0.1;
  const double f_lo = fixed_point(t_lo);
  const double f_hi = fixed_point(t_hi);
  if (!std::isfinite(f_lo) || !std::isfinite(f_hi) || f_lo * f_hi > 0.0) {
    spdlog::debug("isj_bandwidth: fixed point not bracketed, using Silverman");
    return silverman_1d(samples);
  }
  boost::uintmax_t max_iter = 200;
  const auto [a_root, b_root] = boost::math::tools::toms748_solve(
      fixed_point, t_lo, t_hi, f_lo, f_hi, boost::math::tools::eps_tolerance<double>(52), max_iter);
  const double t_star = 0.5 * (a_root + b_root);
  if (!(t_star > 0.0) || !std::isfinite(t_star)) {
    spdlog::debug("isj_bandwidth: degenerate root, using Silverman");
    return silverman_1d(samples);
  }
  return std::max(std::sqrt(t_star) * span_r, kBandwidthFloor);
}

}  // namespace dust
