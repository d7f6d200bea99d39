#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "rmstd/hazard.hpp"
#include "rmstd/trial.hpp"

namespace rmstd {

// one row of the piecewise-exponential likelihood expansion; a record
// contributes a row per segment it spends time in, event attributed to the
// segment containing its follow-up time
struct PseudoRow {
  double exposure = 0.0;
  int event = 0;
  int interval = 0;
  double x = 0.0;
  int arm = 0;
};

std::vector<PseudoRow> expand_records(const std::vector<ObservedRecord>& records,
                                      const std::vector<double>& change_points,
                                      int arm);

// log-linear hazard fit: log h = alpha_j + gamma * (1 - x)
struct FittedPwe {
  std::vector<double> change_points;
  std::vector<double> log_rates;
  double gamma = 0.0;
  bool gamma_included = true;
  double loglik = 0.0;  // survival-scale, comparable across segmentations
  int iterations = 0;

  PiecewiseExpModel to_model() const;
};

// Poisson likelihood with offset log(exposure); Newton scoring
FittedPwe fit_piecewise_exponential(const std::vector<PseudoRow>& rows,
                                    std::vector<double> change_points);

// maximum-likelihood locations for k change points, profiled over the
// middle 90% of observed event times (greedy insertion plus one
// refinement sweep for k > 1)
FittedPwe fit_with_changepoints(const std::vector<ObservedRecord>& records,
                                int arm, int k);

struct ChangepointScan {
  FittedPwe fit;
  int k = 0;
  bool enough_events = true;
  std::vector<double> lrt;  // statistic at each tested level
};

// forward sequential likelihood-ratio scan; level k tested at
// alpha_star / 2^(k-1) against a chi-squared(2) reference
ChangepointScan detect_changepoints(const std::vector<ObservedRecord>& records,
                                    int arm, double alpha_star, int k_max);

// crossing of the two fitted conditional RMST curves
TrueCutpoint predicted_cutpoint(const FittedPwe& control,
                                const FittedPwe& experimental, double t_star,
                                const BiomarkerSupport& support);

// IPCW least squares of min(U, t*) on (1, z, x, zx)
struct RmstRegression {
  Eigen::Vector4d beta = Eigen::Vector4d::Zero();
  Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
  int n = 0;
};

RmstRegression fit_rmst_regression(const std::vector<ObservedRecord>& records,
                                   double t_star);

double interaction_z(const RmstRegression& fit);

// -beta1/beta3 clamped to the support; empty when the interaction is not
// positive
std::optional<double> regression_cutpoint(const RmstRegression& fit,
                                          const BiomarkerSupport& support);

}  // namespace rmstd
