#pragma once

#include <span>

#include <Eigen/Core>

namespace dust {

class ParticleSet;

/// Smallest bandwidth any rule returns; degenerate (coincident) sets land here.
inline constexpr double kBandwidthFloor = 1e-6;

/// Median heuristic for the RBF squared length scale:
/// h = med^2 / log(n + 1) over all pairwise Euclidean distances.
double median_bandwidth(const ParticleSet& ps);

/// Multivariate Silverman rule, per dimension:
/// sigma_d = std_d * (4 / ((p + 2) n))^(1 / (p + 4)).
/// Throws InsufficientData for n < 2.
Eigen::VectorXd silverman_bandwidth(const ParticleSet& ps);

/// Scott's rule, per dimension: sigma_d = std_d * n^(-1 / (p + 4)).
Eigen::VectorXd scott_bandwidth(const ParticleSet& ps);

/// Improved Sheather-Jones (Botev et al. diffusion estimator) for a 1-D sample.
/// Returns the kernel standard deviation. Falls back to Silverman when the
/// sample has fewer than 8 distinct values or the fixed-point equation has no
/// bracketed root.
double isj_bandwidth(std::span<const double> samples);

/// One-dimensional Silverman standard deviation (floored).
double silverman_1d(std::span<const double> samples);

}  // namespace dust
