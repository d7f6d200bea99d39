#pragma once

#include <optional>
#include <vector>

namespace rmstd {

// direction of the biomarker term in the log hazard
enum class CovariateForm { times_x, times_one_minus_x };

// hazard h(t|x) = rate_j * exp(gamma * x) on segment j (or gamma * (1 - x)),
// segments split at change_points, last segment open-ended
struct PiecewiseExpModel {
  std::vector<double> change_points;
  std::vector<double> rates;  // one per segment, change_points.size() + 1
  double gamma = 0.0;
  CovariateForm form = CovariateForm::times_x;

  void validate() const;
  double multiplier(double x) const;
  double hazard(double t, double x) const;
  double cumulative_hazard(double t, double x) const;
  double survival(double t, double x) const;
  double rmst(double t_star, double x) const;

  // inverse-transform event time: smallest t with S(t|x) <= u
  double event_time(double u, double x) const;
};

struct ArmPair {
  PiecewiseExpModel control;
  PiecewiseExpModel experimental;
};

struct BiomarkerSupport {
  double lower = 0.0;
  double upper = 1.0;
};

enum class CutpointKind {
  crossing,         // unique sign change of the conditional RMST difference
  always_negative,  // treatment never beneficial on the support
  always_positive,  // treatment beneficial everywhere
  flat,             // arms identical in RMST at every x
};

struct TrueCutpoint {
  std::optional<double> value;
  bool rising = false;  // difference moves from negative to positive
  CutpointKind kind = CutpointKind::flat;
};

// root of x -> rmst_1(t*|x) - rmst_0(t*|x) on the support; throws on
// multiple crossings
TrueCutpoint true_cutpoint(const ArmPair& arms, double t_star,
                           const BiomarkerSupport& support);

// mean conditional RMST difference for x uniform on (lo, hi)
double marginal_rmst_diff(const ArmPair& arms, double t_star, double lo,
                          double hi);

}  // namespace rmstd
