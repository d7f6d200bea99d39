#include "rmstd/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rmstd/survival.hpp"

namespace rmstd {

namespace {

struct Prepared {
  const AnalysisSet* set;
  double t_star;
  int n_plus;
  std::vector<double> ystar;   // min(U, t*)
  std::vector<char> dstar;     // event or followed past t*
  std::vector<double> ipcw;    // dstar / G(Y-)
};

Prepared prepare(const AnalysisSet& set, double t_star) {
  const auto& rec = set.records;
  if (rec.empty()) throw std::invalid_argument("estimate: no records");
  if (set.weights.size() != rec.size()) {
    throw std::invalid_argument("estimate: weight/record size mismatch");
  }
  bool seen[2] = {false, false};
  double wsum = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (rec[i].arm != 0 && rec[i].arm != 1) {
      throw std::invalid_argument("estimate: arm must be 0 or 1");
    }
    if (!(set.weights[i] >= 0.0) || !std::isfinite(set.weights[i])) {
      throw std::invalid_argument("estimate: invalid weight");
    }
    seen[rec[i].arm] = true;
    wsum += set.weights[i];
  }
  if (!seen[0] || !seen[1]) throw std::runtime_error("estimate: empty arm");
  if (!(wsum > 0.0)) throw std::invalid_argument("estimate: degenerate weights");

  Prepared p{&set, t_star, static_cast<int>(rec.size()), {}, {}, {}};
  std::vector<SurvivalSample> pooled;
  pooled.reserve(rec.size());
  for (const auto& r : rec) pooled.push_back({r.time, r.event, 1.0});
  const StepSurvival g = censoring_km(pooled);

  p.ystar.resize(rec.size());
  p.dstar.resize(rec.size());
  p.ipcw.assign(rec.size(), 0.0);
  for (std::size_t i = 0; i < rec.size(); ++i) {
    p.ystar[i] = std::min(rec[i].time, t_star);
    p.dstar[i] = rec[i].event || rec[i].time >= t_star;
    if (p.dstar[i]) {
      const double gy = g.at_left(p.ystar[i]);
      if (!(gy > 0.0)) {
        throw std::runtime_error("estimate: censoring support violated");
      }
      p.ipcw[i] = 1.0 / gy;
    }
  }
  return p;
}

std::vector<SurvivalSample> arm_samples(const AnalysisSet& set, int arm,
                                        bool weighted) {
  std::vector<SurvivalSample> out;
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    if (set.records[i].arm != arm) continue;
    out.push_back({set.records[i].time, set.records[i].event,
                   weighted ? set.weights[i] : 1.0});
  }
  return out;
}

EstimateResult km_difference(const Prepared& p, bool weighted) {
  const auto& set = *p.set;
  const auto a0 = arm_samples(set, 0, weighted);
  const auto a1 = arm_samples(set, 1, weighted);
  EstimateResult r;
  r.which = weighted ? 2 : 1;
  r.n_plus = p.n_plus;
  r.delta = rmst(km_curve(a1), p.t_star) - rmst(km_curve(a0), p.t_star);
  r.sigma2 = weighted ? cw_km_variance(a0, a1, p.t_star)
                      : naive_rmst_variance(a0, a1, p.t_star);
  return r;
}

// modeled arm difference at x under the pooled regression
inline double model_gap(const Eigen::Vector4d& beta, double x) {
  return beta[1] + beta[3] * x;
}

EstimateResult g_formula(const Prepared& p) {
  const auto& set = *p.set;
  double wsum = 0.0, xbar = 0.0;
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    wsum += set.weights[i];
    xbar += set.weights[i] * set.records[i].x;
  }
  xbar /= wsum;

  EstimateResult r;
  r.which = 3;
  r.n_plus = p.n_plus;
  r.delta = model_gap(set.beta, xbar);
  const Eigen::Vector2d grad(1.0, xbar);
  Eigen::Matrix2d sub;
  sub << set.beta_cov(1, 1), set.beta_cov(1, 3), set.beta_cov(3, 1),
      set.beta_cov(3, 3);
  r.sigma2 = p.n_plus * grad.dot(sub * grad);
  return r;
}

// Hajek means of the IPCW outcome (optionally residualized on the outcome
// model) plus the modeled gap; sandwich over the stacked estimating
// equations for (nu1, nu0, nu2)
EstimateResult hajek_family(const Prepared& p, bool augmented) {
  const auto& set = *p.set;
  const std::size_t n = set.records.size();

  double a1 = 0.0, a0 = 0.0, a2 = 0.0;
  double num1 = 0.0, num0 = 0.0, num2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = set.records[i];
    const double w = set.weights[i];
    const double hw = w * p.ipcw[i];
    const double m1 = augmented ? set.beta[0] + set.beta[1] +
                                      (set.beta[2] + set.beta[3]) * rec.x
                                : 0.0;
    const double m0 = augmented ? set.beta[0] + set.beta[2] * rec.x : 0.0;
    if (rec.arm == 1) {
      a1 += hw;
      num1 += hw * (p.ystar[i] - m1);
    } else {
      a0 += hw;
      num0 += hw * (p.ystar[i] - m0);
    }
    a2 += w;
    num2 += augmented ? w * (m1 - m0) : 0.0;
  }
  if (!(a1 > 0.0) || !(a0 > 0.0)) {
    throw std::runtime_error("estimate: no effective observations in an arm");
  }
  const double nu1 = num1 / a1, nu0 = num0 / a0, nu2 = num2 / a2;

  Eigen::Matrix3d meat = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = set.records[i];
    const double w = set.weights[i];
    const double m1 = augmented ? set.beta[0] + set.beta[1] +
                                      (set.beta[2] + set.beta[3]) * rec.x
                                : 0.0;
    const double m0 = augmented ? set.beta[0] + set.beta[2] * rec.x : 0.0;
    Eigen::Vector3d psi = Eigen::Vector3d::Zero();
    if (rec.arm == 1) {
      psi[0] = p.ipcw[i] * (p.ystar[i] - m1 - nu1);
    } else {
      psi[1] = p.ipcw[i] * (p.ystar[i] - m0 - nu0);
    }
    psi[2] = augmented ? (m1 - m0 - nu2) : 0.0;
    meat += (w * psi) * (w * psi).transpose();
  }
  const Eigen::Vector3d bread(a1, a0, a2);
  const Eigen::Vector3d contrast(1.0, -1.0, augmented ? 1.0 : 0.0);

  EstimateResult r;
  r.which = augmented ? 5 : 4;
  r.n_plus = p.n_plus;
  r.delta = nu1 - nu0 + (augmented ? nu2 : 0.0);
  double var = 0.0;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      var += contrast[a] * contrast[b] * meat(a, b) / (bread[a] * bread[b]);
    }
  }
  r.sigma2 = p.n_plus * var;
  return r;
}

}  // namespace

EstimateResult estimate(const AnalysisSet& set, double t_star, int which) {
  if (!(t_star > 0.0)) {
    throw std::invalid_argument("estimate: truncation time must be positive");
  }
  const Prepared p = prepare(set, t_star);
  switch (which) {
    case 1:
      return km_difference(p, false);
    case 2:
      return km_difference(p, true);
    case 3:
      return g_formula(p);
    case 4:
      return hajek_family(p, false);
    case 5:
      return hajek_family(p, true);
    default:
      throw std::invalid_argument("estimate: estimator index must be 1..5");
  }
}

std::vector<EstimateResult> estimate_all(const AnalysisSet& set,
                                         double t_star) {
  std::vector<EstimateResult> out;
  out.reserve(5);
  for (int w = 1; w <= 5; ++w) out.push_back(estimate(set, t_star, w));
  return out;
}

}  // namespace rmstd
