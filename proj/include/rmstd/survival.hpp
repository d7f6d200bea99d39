#pragma once

#include <utility>
#include <vector>

namespace rmstd {

struct SurvivalSample {
  double time = 0.0;
  bool event = false;
  double weight = 1.0;
};

// right-continuous step function with S(t) = 1 before the first jump
struct StepSurvival {
  std::vector<double> times;   // jump locations, strictly increasing
  std::vector<double> values;  // value on [times[k], times[k+1])

  double at(double t) const;
  double at_left(double t) const;  // S(t-)
  double integral(double t) const; // area under the curve on [0, t]
};

// product-limit estimator; weights enter at-risk and event sums, events
// precede censorings at tied times
StepSurvival km_curve(const std::vector<SurvivalSample>& samples);

// product-limit estimator of the censoring distribution (flipped indicators)
StepSurvival censoring_km(const std::vector<SurvivalSample>& samples);

double rmst(const StepSurvival& curve, double t_star);

// cumulative hazard increments dN/Y at event times
std::vector<std::pair<double, double>> nelson_aalen(
    const std::vector<SurvivalSample>& samples);

// Greenwood-type variance of the two-arm RMST difference, scaled by the
// combined sample count; weights are ignored, each sample counts once
double naive_rmst_variance(const std::vector<SurvivalSample>& arm0,
                           const std::vector<SurvivalSample>& arm1,
                           double t_star);

// variance of the weighted-KM RMST difference under calibration weights;
// reduces to naive_rmst_variance when all weights are equal
double cw_km_variance(const std::vector<SurvivalSample>& arm0,
                      const std::vector<SurvivalSample>& arm1,
                      double t_star);

}  // namespace rmstd
