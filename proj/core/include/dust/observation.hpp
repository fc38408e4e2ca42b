#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace dust {

/// One real transition: the state reached, the control that was applied and
/// the state it was applied in.
struct Observation {
  Eigen::VectorXd x_curr;
  Eigen::VectorXd u_prev;
  Eigen::VectorXd x_prev;
  std::int64_t step_index = 0;
};

}  // namespace dust
