#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>

#include <Eigen/Core>
#include <gtest/gtest.h>

namespace dust::testing {

/// Small seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(eng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }

  Eigen::VectorXd vector(Eigen::Index n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(lo, hi);
    return v;
  }
  Eigen::MatrixXd matrix(Eigen::Index r, Eigen::Index c, double lo, double hi) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = uniform(lo, hi);
    }
    return m;
  }
  Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, double sd = 1.0) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal(0.0, sd);
    }
    return m;
  }

 private:
  std::mt19937_64 eng_;
};

/// Runs `body` for `cases` seeds; failures report the seed.
inline void for_all(int cases, std::uint64_t base_seed, const std::function<void(Gen&)>& body) {
  for (int k = 0; k < cases; ++k) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(k);
    SCOPED_TRACE("seed " + std::to_string(seed));
    Gen g(seed);
    body(g);
    if (::testing::Test::HasFatalFailure()) return;
  }
}

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
  return std::abs(a - b) / scale;
}

}  // namespace dust::testing
