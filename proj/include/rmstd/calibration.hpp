#pragma once

#include <Eigen/Dense>

#include <vector>

namespace rmstd {

struct CalibrationResult {
  std::vector<double> weights;  // strictly positive, sum to 1
  Eigen::Vector2d lambda = Eigen::Vector2d::Zero();
  int iterations = 0;
  double max_residual = 0.0;  // sup norm of the moment constraint violation
  std::vector<double> objective;  // dual value per accepted Newton step
};

// first two raw moments of the target sample
Eigen::Vector2d target_moments(const std::vector<double>& xs);

// true moments of a uniform biomarker on (lo, hi)
Eigen::Vector2d uniform_moments(double lo, double hi);

// minimum-entropy reweighting of xs matching the target mean and mean
// square; exponential-tilt dual solved by damped Newton
CalibrationResult calibrate_weights(const std::vector<double>& xs,
                                    const Eigen::Vector2d& target);

// the target must lie strictly inside the convex hull of {(x, x^2)}
bool calibration_feasible(const std::vector<double>& xs,
                          const Eigen::Vector2d& target);

}  // namespace rmstd
