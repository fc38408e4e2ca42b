#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "dust/bandwidth.hpp"
#include "dust/errors.hpp"
#include "dust/svgd.hpp"
#include "../support.hpp"

using namespace dust;
using dust::testing::for_all;
using dust::testing::Gen;
using dust::testing::rel_err;

namespace {

// Plain double sum over j, written independently of the library.
Eigen::MatrixXd naive_phi(const Eigen::MatrixXd& x, const Eigen::MatrixXd& s, double h) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::VectorXd diff = (x.row(j) - x.row(i)).transpose();
      const double k = std::exp(-diff.squaredNorm() / h);
      out.row(i) += (k * s.row(j).transpose() - (2.0 / h) * k * diff).transpose();
    }
  }
  return out / static_cast<double>(n);
}

Eigen::MatrixXd gaussian_score(const Eigen::MatrixXd& x, const Eigen::VectorXd& mu, const Eigen::VectorXd& var) {
  Eigen::MatrixXd s(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    s.row(i) = ((mu - x.row(i).transpose()).array() / var.array()).matrix().transpose();
  }
  return s;
}

double brute_median_h(const Eigen::MatrixXd& x) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      if (i < j) d.push_back(std::sqrt((x.row(i) - x.row(j)).squaredNorm()));
    }
  }
  std::sort(d.begin(), d.end());
  const std::size_t m = d.size();
  const double med = m % 2 ? d[m / 2] : 0.5 * (d[m / 2 - 1] + d[m / 2]);
  return med * med / std::log(static_cast<double>(x.rows()) + 1.0);
}

}  // namespace

TEST(RbfKernel, ZeroDistanceIsOneWithZeroGradient) {
  Eigen::VectorXd x(3);
  x << 0.3, -1.2, 4.0;
  for (double h : {1e-3, 1.0, 50.0}) {
    const auto k = rbf_kernel(x, x, h);
    EXPECT_EQ(k.value, 1.0);
    EXPECT_TRUE(k.grad_x.isZero(0.0));
  }
}

TEST(RbfKernel, HandEvaluatedUnitCase) {
  const auto k = rbf_kernel(Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 1.0), 1.0);
  EXPECT_NEAR(k.value, std::exp(-1.0), 1e-15);
  EXPECT_NEAR(k.grad_x(0), 2.0 * std::exp(-1.0), 1e-15);
  const double e = 1e-6;
  const double fd = (rbf_kernel(Eigen::VectorXd::Constant(1, e), Eigen::VectorXd::Constant(1, 1.0), 1.0).value -
                     rbf_kernel(Eigen::VectorXd::Constant(1, -e), Eigen::VectorXd::Constant(1, 1.0), 1.0).value) /
                    (2 * e);
  EXPECT_NEAR(fd, k.grad_x(0), 1e-8);
}

TEST(RbfKernel, SymmetricAndBounded) {
  for_all(100, 11, [](Gen& g) {
    const int p = g.integer(1, 5);
    const Eigen::VectorXd x = g.vector(p, -3, 3);
    const Eigen::VectorXd y = g.vector(p, -3, 3);
    const double h = g.uniform(0.05, 10.0);
    const double a = rbf_kernel(x, y, h).value;
    EXPECT_EQ(a, rbf_kernel(y, x, h).value);
    EXPECT_GT(a, 0.0);
    EXPECT_LE(a, 1.0);
  });
}

TEST(RbfKernel, GradientMatchesFiniteDifferences) {
  for_all(100, 23, [](Gen& g) {
    const int p = g.integer(1, 4);
    const Eigen::VectorXd x = g.vector(p, -1, 1);
    const Eigen::VectorXd y = g.vector(p, -1, 1);
    const double h = g.uniform(0.5, 4.0);
    const auto k = rbf_kernel(x, y, h);
    const double e = 1e-5;
    for (int d = 0; d < p; ++d) {
      Eigen::VectorXd xp = x, xm = x;
      xp(d) += e;
      xm(d) -= e;
      const double fd = (rbf_kernel(xp, y, h).value - rbf_kernel(xm, y, h).value) / (2 * e);
      if (std::abs(k.grad_x(d)) > 1e-6) EXPECT_LT(rel_err(fd, k.grad_x(d)), 1e-5);
      else EXPECT_NEAR(fd, k.grad_x(d), 1e-9);
    }
  });
}

TEST(RbfKernel, RejectsBadInput) {
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  EXPECT_THROW(rbf_kernel(x, x, 0.0), InvalidArgument);
  EXPECT_THROW(rbf_kernel(x, x, -1.0), InvalidArgument);
  EXPECT_THROW(rbf_kernel(x, Eigen::VectorXd::Zero(3), 1.0), InvalidArgument);
  Eigen::VectorXd bad = x;
  bad(0) = std::nan("");
  EXPECT_THROW(rbf_kernel(bad, x, 1.0), InvalidArgument);
}

TEST(MedianBandwidth, IdenticalParticlesUseFloor) {
  EXPECT_EQ(median_bandwidth(ParticleSet(Eigen::MatrixXd::Constant(3, 2, 0.7))), 1e-6);
}

TEST(MedianBandwidth, ThreePointsByHand) {
  Eigen::MatrixXd x(3, 1);
  x << 0, 1, 2;
  EXPECT_NEAR(median_bandwidth(ParticleSet(x)), 1.0 / std::log(4.0), 1e-15);
}

TEST(MedianBandwidth, MatchesPairwiseOracle) {
  for_all(20, 5, [](Gen& g) {
    const Eigen::MatrixXd x = g.gaussian(50, 2);
    EXPECT_LT(rel_err(median_bandwidth(ParticleSet(x)), brute_median_h(x)), 0.2);
  });
}

TEST(SilvermanBandwidth, UnitStdFormula) {
  Gen g(3);
  Eigen::MatrixXd x = g.gaussian(100, 1);
  const double mean = x.mean();
  x.array() -= mean;
  x /= std::sqrt(x.squaredNorm() / 99.0);
  EXPECT_NEAR(silverman_bandwidth(ParticleSet(x))(0), std::pow(4.0 / 300.0, 0.2), 1e-12);
  EXPECT_NEAR(std::pow(4.0 / 300.0, 0.2), 0.4217, 1e-4);
}

TEST(SilvermanBandwidth, DegenerateAndTooSmall) {
  EXPECT_EQ(silverman_bandwidth(ParticleSet(Eigen::MatrixXd::Constant(10, 2, 1.0)))(0), 1e-6);
  EXPECT_THROW(silverman_bandwidth(ParticleSet(Eigen::MatrixXd::Zero(1, 1))), InsufficientData);
  EXPECT_THROW(scott_bandwidth(ParticleSet(Eigen::MatrixXd::Zero(1, 1))), InsufficientData);
}

TEST(SilvermanBandwidth, ScaleEquivariant) {
  for_all(20, 17, [](Gen& g) {
    const Eigen::MatrixXd x = g.gaussian(30, 3);
    const Eigen::VectorXd a = silverman_bandwidth(ParticleSet(x));
    const Eigen::VectorXd b = silverman_bandwidth(ParticleSet(2.0 * x));
    for (int d = 0; d < 3; ++d) EXPECT_NEAR(b(d), 2.0 * a(d), 1e-12 * b(d));
    const Eigen::VectorXd s = scott_bandwidth(ParticleSet(x));
    EXPECT_GT(s(0), a(0));
  });
}

TEST(IsjBandwidth, GaussianSampleNearSilverman) {
  Gen g(8);
  std::vector<double> v(5000);
  for (double& s : v) s = g.normal();
  EXPECT_LT(rel_err(isj_bandwidth(v), silverman_1d(v)), 0.3);
}

TEST(IsjBandwidth, ConstantSampleFallsBackToFloor) {
  const std::vector<double> v(40, 2.5);
  EXPECT_EQ(isj_bandwidth(v), 1e-6);
}

TEST(IsjBandwidth, ScaleEquivariant) {
  Gen g(12);
  std::vector<double> v(500), w(500);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = g.normal() + (i % 3 == 0 ? 4.0 : 0.0);
    w[i] = 3.5 * v[i];
  }
  EXPECT_LT(rel_err(isj_bandwidth(w), 3.5 * isj_bandwidth(v)), 1e-6);
}

TEST(PhiStar, SingleParticleEqualsScore) {
  for_all(50, 31, [](Gen& g) {
    const int p = g.integer(1, 6);
    const ParticleSet ps(g.matrix(1, p, -5, 5));
    const Eigen::MatrixXd s = g.matrix(1, p, -5, 5);
    for (auto rule : {BandwidthRule::Median, BandwidthRule::Silverman, BandwidthRule::Scott}) {
      EXPECT_EQ(phi_star(ps, s, KernelSpec::with_rule(rule)), s);
    }
    EXPECT_EQ(phi_star(ps, s, KernelSpec::fixed(0.3)), s);
  });
}

TEST(PhiStar, CoincidentParticlesFollowScore) {
  const ParticleSet ps(Eigen::MatrixXd::Constant(2, 2, 0.5));
  Eigen::MatrixXd s(2, 2);
  s << 1.0, -2.0, 1.0, -2.0;
  const Eigen::MatrixXd phi = phi_star(ps, s, KernelSpec::with_rule(BandwidthRule::Median));
  EXPECT_TRUE(phi.isApprox(s, 1e-15));
}

TEST(PhiStar, MatchesDoubleLoop) {
  for_all(20, 41, [](Gen& g) {
    const Eigen::MatrixXd x = g.gaussian(5, 2);
    const Eigen::MatrixXd s = gaussian_score(x, Eigen::Vector2d(1, -1), Eigen::Vector2d(0.5, 2.0));
    const double h = median_bandwidth(ParticleSet(x));
    const Eigen::MatrixXd got = phi_star(ParticleSet(x), s, KernelSpec::fixed(h));
    EXPECT_LT((got - naive_phi(x, s, h)).cwiseAbs().maxCoeff(), 1e-12);
  });
}

TEST(PhiStar, PermutationEquivariant) {
  for_all(20, 43, [](Gen& g) {
    const Eigen::MatrixXd x = g.gaussian(7, 3);
    const Eigen::MatrixXd s = g.gaussian(7, 3);
    std::vector<int> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937(static_cast<unsigned>(g.integer(0, 1000))));
    Eigen::MatrixXd xp(7, 3), sp(7, 3);
    for (int i = 0; i < 7; ++i) {
      xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
      sp.row(i) = s.row(perm[static_cast<std::size_t>(i)]);
    }
    const auto spec = KernelSpec::fixed(1.3);
    const Eigen::MatrixXd a = phi_star(ParticleSet(x), s, spec);
    const Eigen::MatrixXd b = phi_star(ParticleSet(xp), sp, spec);
    for (int i = 0; i < 7; ++i) {
      EXPECT_LT((b.row(i) - a.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff(), 1e-12);
    }
  });
}

TEST(PhiStar, RejectsMismatchedScores) {
  const ParticleSet ps(Eigen::MatrixXd::Zero(3, 2));
  EXPECT_THROW(phi_star(ps, Eigen::MatrixXd::Zero(3, 1), KernelSpec::fixed(1.0)), InvalidArgument);
  EXPECT_THROW(phi_star(ps, Eigen::MatrixXd::Zero(2, 2), KernelSpec::fixed(1.0)), InvalidArgument);
}

TEST(SvgdStep, ZeroStepsIsIdentity) {
  Gen g(1);
  const ParticleSet ps(g.gaussian(10, 2));
  const ScoreFn score = [](const Eigen::MatrixXd& x) { return Eigen::MatrixXd(-x); };
  EXPECT_EQ(svgd_step(ps, score, KernelSpec::with_rule(BandwidthRule::Median), {0.1, 0}), ps);
}

TEST(SvgdStep, SingleParticleIsGradientAscent) {
  const Eigen::Vector2d mu(2.0, -3.0);
  const ScoreFn score = [&](const Eigen::MatrixXd& x) {
    return gaussian_score(x, mu, Eigen::Vector2d::Ones());
  };
  const ParticleSet out = svgd_step(ParticleSet(Eigen::MatrixXd::Zero(1, 2)), score,
                                    KernelSpec::with_rule(BandwidthRule::Median), {0.1, 200});
  EXPECT_LT((out.particle(0) - mu).norm(), 1e-3);
  // closed form: x_k = mu (1 - 0.9^k)
  EXPECT_NEAR(out.particle(0)(0), 2.0 * (1.0 - std::pow(0.9, 200)), 1e-12);
}

TEST(SvgdStep, GaussianTargetMoments) {
  const Eigen::Vector2d mu(1.0, -1.0);
  const Eigen::Vector2d var(0.5, 2.0);
  Gen g(2024);
  const ScoreFn score = [&](const Eigen::MatrixXd& x) { return gaussian_score(x, mu, var); };
  const ParticleSet out = svgd_step(ParticleSet(g.gaussian(50, 2)), score,
                                    KernelSpec::with_rule(BandwidthRule::Median), {0.1, 500});
  const Eigen::Vector2d m = out.mean();
  EXPECT_LT((m - mu).cwiseAbs().maxCoeff(), 0.1);
  const Eigen::MatrixXd c = out.points().rowwise() - m.transpose();
  for (int d = 0; d < 2; ++d) {
    const double v = c.col(d).squaredNorm() / 49.0;
    EXPECT_LT(rel_err(v, var(d)), 0.25);
  }
}

TEST(SvgdStep, Deterministic) {
  Gen g(99);
  const ParticleSet ps(g.gaussian(20, 3));
  const ScoreFn score = [](const Eigen::MatrixXd& x) { return Eigen::MatrixXd(-2.0 * x); };
  const auto spec = KernelSpec::with_rule(BandwidthRule::Silverman);
  EXPECT_EQ(svgd_step(ps, score, spec, {0.05, 30}), svgd_step(ps, score, spec, {0.05, 30}));
}

TEST(SvgdStep, NonFiniteScoreNamesParticle) {
  const ScoreFn score = [](const Eigen::MatrixXd& x) {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(x.rows(), x.cols());
    s(2, 0) = std::numeric_limits<double>::infinity();
    return s;
  };
  try {
    svgd_step(ParticleSet(Eigen::MatrixXd::Zero(4, 1)), score, KernelSpec::fixed(1.0), {0.1, 1});
    FAIL() << "expected NumericalFailure";
  } catch (const NumericalFailure& e) {
    ASSERT_TRUE(e.index().has_value());
    EXPECT_EQ(*e.index(), 2u);
  }
}

TEST(SvgdStep, StaysFiniteOnLogConcaveTargets) {
  for_all(100, 500, [](Gen& g) {
    const int p = g.integer(1, 3);
    const Eigen::VectorXd mu = g.vector(p, -2, 2);
    const Eigen::VectorXd var = g.vector(p, 0.5, 3.0);
    const double eps = g.uniform(0.01, 0.5);
    const ScoreFn score = [&](const Eigen::MatrixXd& x) { return gaussian_score(x, mu, var); };
    const ParticleSet out = svgd_step(ParticleSet(g.matrix(g.integer(2, 20), p, -3, 3)), score,
                                      KernelSpec::with_rule(BandwidthRule::Median), {eps, 50});
    EXPECT_TRUE(out.points().allFinite());
  });
}

TEST(SvgdConfig, Validation) {
  EXPECT_THROW((SvgdConfig{0.0, 1}).validate(), InvalidArgument);
  EXPECT_THROW((SvgdConfig{0.1, -1}).validate(), InvalidArgument);
  EXPECT_NO_THROW((SvgdConfig{0.1, 0}).validate());
  EXPECT_THROW(ParticleSet(Eigen::MatrixXd(0, 2)), InvalidArgument);
}
