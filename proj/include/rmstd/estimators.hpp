#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "rmstd/trial.hpp"

namespace rmstd {

// subgroup records with calibration weights and the pooled regression fit
// used by the model-based estimators
struct AnalysisSet {
  std::vector<ObservedRecord> records;
  std::vector<double> weights;  // aligned with records, any positive scale
  Eigen::Vector4d beta = Eigen::Vector4d::Zero();
  Eigen::Matrix4d beta_cov = Eigen::Matrix4d::Zero();
};

struct EstimateResult {
  int which = 0;
  double delta = 0.0;
  double sigma2 = 0.0;  // variance on the sqrt(n_plus) scale
  int n_plus = 0;

  double se() const { return std::sqrt(sigma2 / n_plus); }
  double z() const { return delta / se(); }
};

// which selects the estimator:
//   1 unweighted KM difference
//   2 calibration-weighted KM difference
//   3 calibration-weighted regression (g-formula) difference
//   4 calibration-weighted IPCW Hajek difference
//   5 augmented combination of 3 and 4
EstimateResult estimate(const AnalysisSet& set, double t_star, int which);

std::vector<EstimateResult> estimate_all(const AnalysisSet& set, double t_star);

}  // namespace rmstd
