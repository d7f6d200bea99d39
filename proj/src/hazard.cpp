#include "rmstd/hazard.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rmstd {

void PiecewiseExpModel::validate() const {
  if (rates.size() != change_points.size() + 1) {
    throw std::invalid_argument("piecewise model: rates must have one entry per segment");
  }
  double prev = 0.0;
  for (double cp : change_points) {
    if (!std::isfinite(cp) || cp <= prev) {
      throw std::invalid_argument("piecewise model: change points must be positive and increasing");
    }
    prev = cp;
  }
  for (double r : rates) {
    if (!std::isfinite(r) || r <= 0.0) {
      throw std::invalid_argument("piecewise model: rates must be positive");
    }
  }
  if (!std::isfinite(gamma)) {
    throw std::invalid_argument("piecewise model: non-finite gamma");
  }
}

namespace {

void check_x(double x) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::invalid_argument("piecewise model: biomarker outside [0,1]");
  }
}

}  // namespace

double PiecewiseExpModel::multiplier(double x) const {
  check_x(x);
  const double v = form == CovariateForm::times_x ? x : 1.0 - x;
  return std::exp(gamma * v);
}

double PiecewiseExpModel::hazard(double t, double x) const {
  if (t < 0.0) throw std::invalid_argument("piecewise model: negative time");
  const double m = multiplier(x);
  std::size_t j = 0;
  while (j < change_points.size() && t >= change_points[j]) ++j;
  return rates[j] * m;
}

double PiecewiseExpModel::cumulative_hazard(double t, double x) const {
  if (t < 0.0) throw std::invalid_argument("piecewise model: negative time");
  const double m = multiplier(x);
  double h = 0.0, lo = 0.0;
  for (std::size_t j = 0; j < rates.size(); ++j) {
    const double hi = j < change_points.size()
                          ? change_points[j]
                          : std::numeric_limits<double>::infinity();
    if (t <= hi) {
      h += rates[j] * m * (t - lo);
      return h;
    }
    h += rates[j] * m * (hi - lo);
    lo = hi;
  }
  return h;
}

double PiecewiseExpModel::survival(double t, double x) const {
  return std::exp(-cumulative_hazard(t, x));
}

double PiecewiseExpModel::rmst(double t_star, double x) const {
  if (t_star < 0.0) throw std::invalid_argument("piecewise model: negative truncation time");
  const double m = multiplier(x);
  double area = 0.0, s = 1.0, lo = 0.0;
  for (std::size_t j = 0; j < rates.size(); ++j) {
    const double hi = j < change_points.size()
                          ? change_points[j]
                          : std::numeric_limits<double>::infinity();
    const double len = std::min(t_star, hi) - lo;
    if (len <= 0.0) break;
    const double h = rates[j] * m;
    area += s * (1.0 - std::exp(-h * len)) / h;  // exact segment integral
    s *= std::exp(-h * len);
    lo += len;
    if (lo >= t_star) break;
  }
  return area;
}

double PiecewiseExpModel::event_time(double u, double x) const {
  if (!(u > 0.0 && u < 1.0)) {
    throw std::invalid_argument("piecewise model: survival fraction outside (0,1)");
  }
  const double m = multiplier(x);
  double target = -std::log(u), lo = 0.0;
  for (std::size_t j = 0; j < rates.size(); ++j) {
    const double h = rates[j] * m;
    if (j + 1 == rates.size()) return lo + target / h;
    const double cap = h * (change_points[j] - lo);
    if (target <= cap) return lo + target / h;
    target -= cap;
    lo = change_points[j];
  }
  return lo;  // unreachable
}

TrueCutpoint true_cutpoint(const ArmPair& arms, double t_star,
                           const BiomarkerSupport& support) {
  arms.control.validate();
  arms.experimental.validate();
  if (!(support.lower >= 0.0 && support.lower < support.upper &&
        support.upper <= 1.0)) {
    throw std::invalid_argument("true_cutpoint: invalid biomarker support");
  }
  const auto diff = [&](double x) {
    return arms.experimental.rmst(t_star, x) - arms.control.rmst(t_star, x);
  };

  constexpr int kGrid = 512;
  std::vector<double> xs(kGrid + 1), fs(kGrid + 1);
  for (int i = 0; i <= kGrid; ++i) {
    xs[i] = support.lower + (support.upper - support.lower) * i / kGrid;
    fs[i] = diff(xs[i]);
  }

  // compress to the nonzero sign sequence, remembering bracket endpoints
  int flips = 0, last_sign = 0;
  double bracket_lo = 0.0, bracket_hi = 0.0;
  bool went_up = false;
  double last_nonzero_x = xs[0];
  for (int i = 0; i <= kGrid; ++i) {
    const int s = fs[i] > 0.0 ? 1 : fs[i] < 0.0 ? -1 : 0;
    if (s == 0) continue;
    if (last_sign != 0 && s != last_sign) {
      ++flips;
      bracket_lo = last_nonzero_x;
      bracket_hi = xs[i];
      went_up = s > 0;
    }
    last_sign = s;
    last_nonzero_x = xs[i];
  }

  TrueCutpoint out;
  if (flips == 0) {
    out.kind = last_sign > 0   ? CutpointKind::always_positive
               : last_sign < 0 ? CutpointKind::always_negative
                               : CutpointKind::flat;
    return out;
  }
  if (flips > 1) throw std::runtime_error("ambiguous cutpoint");

  double lo = bracket_lo, hi = bracket_hi;
  double flo = diff(lo);
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = diff(mid);
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  out.value = std::clamp(0.5 * (lo + hi), support.lower, support.upper);
  out.rising = went_up;
  out.kind = CutpointKind::crossing;
  return out;
}

double marginal_rmst_diff(const ArmPair& arms, double t_star, double lo,
                          double hi) {
  if (!(lo < hi)) {
    throw std::invalid_argument("marginal_rmst_diff: empty biomarker region");
  }
  const auto f = [&](double x) {
    return arms.experimental.rmst(t_star, x) - arms.control.rmst(t_star, x);
  };
  const double integral =
      boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
          f, lo, hi, 12, 1e-10);
  return integral / (hi - lo);
}

}  // namespace rmstd
