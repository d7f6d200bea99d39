#include "rmstd/cutpoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rmstd/stats.hpp"
#include "rmstd/survival.hpp"

namespace rmstd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

std::vector<PseudoRow> expand_records(const std::vector<ObservedRecord>& records,
                                      const std::vector<double>& change_points,
                                      int arm) {
  for (std::size_t j = 1; j < change_points.size(); ++j) {
    if (!(change_points[j] > change_points[j - 1])) {
      throw std::invalid_argument("expand_records: change points must be increasing");
    }
  }
  if (!change_points.empty() && !(change_points.front() > 0.0)) {
    throw std::invalid_argument("expand_records: change points must be positive");
  }

  std::vector<PseudoRow> rows;
  for (const auto& r : records) {
    if (r.arm != arm) continue;
    double prev = 0.0;
    int last_emitted = -1;
    for (std::size_t j = 0; j <= change_points.size(); ++j) {
      const double hi = j < change_points.size()
                            ? change_points[j]
                            : std::numeric_limits<double>::infinity();
      const double e = std::min(r.time, hi) - prev;
      if (e > 0.0) {
        rows.push_back({e, 0, static_cast<int>(j), r.x, arm});
        last_emitted = static_cast<int>(rows.size()) - 1;
      }
      prev = hi;
      if (r.time <= hi) break;
    }
    if (r.event && last_emitted >= 0) rows[last_emitted].event = 1;
  }
  return rows;
}

PiecewiseExpModel FittedPwe::to_model() const {
  PiecewiseExpModel m;
  m.change_points = change_points;
  m.rates.reserve(log_rates.size());
  for (double a : log_rates) m.rates.push_back(std::exp(a));
  m.gamma = gamma_included ? gamma : 0.0;
  m.form = CovariateForm::times_one_minus_x;
  m.validate();
  return m;
}

FittedPwe fit_piecewise_exponential(const std::vector<PseudoRow>& rows,
                                    std::vector<double> change_points) {
  const int n_int = static_cast<int>(change_points.size()) + 1;
  if (rows.empty()) throw std::invalid_argument("piecewise fit: no rows");

  std::vector<double> events(n_int, 0.0), exposure(n_int, 0.0);
  double cmin = 1.0, cmax = 0.0;
  for (const auto& r : rows) {
    if (r.interval < 0 || r.interval >= n_int) {
      throw std::invalid_argument("piecewise fit: interval index out of range");
    }
    if (!(r.exposure > 0.0)) {
      throw std::invalid_argument("piecewise fit: nonpositive exposure");
    }
    events[r.interval] += r.event;
    exposure[r.interval] += r.exposure;
    const double c = 1.0 - r.x;
    cmin = std::min(cmin, c);
    cmax = std::max(cmax, c);
  }
  for (int j = 0; j < n_int; ++j) {
    if (events[j] <= 0.0) throw std::runtime_error("piecewise fit: empty interval");
  }

  const bool with_gamma = cmax - cmin > 1e-12;
  const int p = n_int + (with_gamma ? 1 : 0);

  Eigen::VectorXd theta(p);
  for (int j = 0; j < n_int; ++j) theta[j] = std::log(events[j] / exposure[j]);
  if (with_gamma) theta[n_int] = 0.0;

  const auto eval = [&](const Eigen::VectorXd& th, Eigen::VectorXd* score,
                        Eigen::MatrixXd* info) {
    double ll = 0.0;
    if (score) score->setZero();
    if (info) info->setZero();
    for (const auto& r : rows) {
      const double c = 1.0 - r.x;
      const double eta = th[r.interval] + (with_gamma ? th[n_int] * c : 0.0);
      const double mu = r.exposure * std::exp(eta);
      ll += r.event * eta - mu;
      if (score) {
        const double resid = r.event - mu;
        (*score)[r.interval] += resid;
        if (with_gamma) (*score)[n_int] += c * resid;
      }
      if (info) {
        (*info)(r.interval, r.interval) += mu;
        if (with_gamma) {
          (*info)(r.interval, n_int) += c * mu;
          (*info)(n_int, r.interval) += c * mu;
          (*info)(n_int, n_int) += c * c * mu;
        }
      }
    }
    return ll;
  };

  Eigen::VectorXd score(p);
  Eigen::MatrixXd info(p, p);
  double ll = eval(theta, &score, &info);
  int iter = 0;
  for (; iter < 100; ++iter) {
    if (score.lpNorm<Eigen::Infinity>() < 1e-8) break;
    Eigen::LDLT<Eigen::MatrixXd> fac(info);
    if (fac.info() != Eigen::Success || !fac.isPositive()) {
      throw std::runtime_error("piecewise fit: rank deficient design");
    }
    const Eigen::VectorXd step = fac.solve(score);
    double t = 1.0;
    Eigen::VectorXd cand;
    double ll_new;
    for (int half = 0; half < 40; ++half) {
      cand = theta + t * step;
      ll_new = eval(cand, nullptr, nullptr);
      if (ll_new >= ll - 1e-12) break;
      t *= 0.5;
    }
    theta = cand;
    ll = eval(theta, &score, &info);
  }
  if (score.lpNorm<Eigen::Infinity>() >= 1e-6) {
    throw std::runtime_error("piecewise fit: did not converge");
  }

  FittedPwe fit;
  fit.change_points = std::move(change_points);
  fit.log_rates.assign(theta.data(), theta.data() + n_int);
  fit.gamma = with_gamma ? theta[n_int] : 0.0;
  fit.gamma_included = with_gamma;
  fit.loglik = ll;
  fit.iterations = iter;
  return fit;
}

namespace {

struct ArmData {
  std::vector<double> u;
  std::vector<double> c;  // 1 - x
  std::vector<char> d;
  int events = 0;
  double s1 = 0.0;  // sum of c over events
};

ArmData collect_arm(const std::vector<ObservedRecord>& records, int arm) {
  ArmData ad;
  for (const auto& r : records) {
    if (r.arm != arm || r.time <= 0.0) continue;
    ad.u.push_back(r.time);
    ad.c.push_back(1.0 - r.x);
    ad.d.push_back(r.event ? 1 : 0);
    if (r.event) {
      ++ad.events;
      ad.s1 += 1.0 - r.x;
    }
  }
  return ad;
}

// maximized survival log likelihood for a fixed partition: the interval
// rates are profiled out in closed form, gamma by a 1-D Newton iteration
// warm-started from *gamma_io
double profile_loglik(const ArmData& ad, const std::vector<double>& cps,
                      double* gamma_io) {
  const int n_int = static_cast<int>(cps.size()) + 1;
  const std::size_t n = ad.u.size();

  std::vector<double> d_j(n_int, 0.0);
  std::vector<int> event_int(n);
  for (std::size_t i = 0; i < n; ++i) {
    int j = 0;
    while (j + 1 < n_int && ad.u[i] > cps[j]) ++j;
    event_int[i] = j;
    if (ad.d[i]) d_j[j] += 1.0;
  }
  for (int j = 0; j < n_int; ++j) {
    if (d_j[j] <= 0.0) return kNegInf;
  }

  double gamma = gamma_io ? *gamma_io : 0.0;
  std::vector<double> w(n_int), w1(n_int), w2(n_int);
  double ll = kNegInf;

  const auto eval = [&](double g, bool derivs) {
    std::fill(w.begin(), w.end(), 0.0);
    if (derivs) {
      std::fill(w1.begin(), w1.end(), 0.0);
      std::fill(w2.begin(), w2.end(), 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double m = std::exp(g * ad.c[i]);
      double prev = 0.0;
      for (int j = 0; j <= event_int[i]; ++j) {
        const double hi = j + 1 < n_int ? std::min(ad.u[i], cps[j]) : ad.u[i];
        const double e = hi - prev;
        prev = hi;
        if (e <= 0.0) continue;
        const double em = e * m;
        w[j] += em;
        if (derivs) {
          w1[j] += em * ad.c[i];
          w2[j] += em * ad.c[i] * ad.c[i];
        }
      }
    }
    double v = g * ad.s1;
    for (int j = 0; j < n_int; ++j) {
      v += d_j[j] * (std::log(d_j[j]) - std::log(w[j]) - 1.0);
    }
    return v;
  };

  ll = eval(gamma, true);
  for (int it = 0; it < 50; ++it) {
    double grad = ad.s1, hess = 0.0;
    for (int j = 0; j < n_int; ++j) {
      const double r1 = w1[j] / w[j];
      grad -= d_j[j] * r1;
      hess -= d_j[j] * (w2[j] / w[j] - r1 * r1);
    }
    if (std::abs(grad) < 1e-9 * (1.0 + std::abs(ad.s1)) || hess >= 0.0) break;
    double step = -grad / hess;
    step = std::clamp(step, -5.0, 5.0);
    double g_new = std::clamp(gamma + step, -20.0, 20.0);
    double ll_new = eval(g_new, true);
    for (int half = 0; half < 30 && ll_new < ll - 1e-12; ++half) {
      g_new = 0.5 * (gamma + g_new);
      ll_new = eval(g_new, true);
    }
    if (ll_new <= ll + 1e-12 && std::abs(g_new - gamma) < 1e-12) break;
    gamma = g_new;
    ll = ll_new;
  }
  if (gamma_io) *gamma_io = gamma;
  return ll;
}

// unique event times with the smallest and largest 5% trimmed away
std::vector<double> candidate_grid(const ArmData& ad) {
  std::vector<double> ev;
  for (std::size_t i = 0; i < ad.u.size(); ++i) {
    if (ad.d[i]) ev.push_back(ad.u[i]);
  }
  std::sort(ev.begin(), ev.end());
  const std::size_t m = ev.size();
  if (m < 4) return {};
  const std::size_t trim = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(m))));
  if (2 * trim >= m) return {};
  std::vector<double> out;
  for (std::size_t i = trim; i + trim < m; ++i) {
    if (out.empty() || ev[i] != out.back()) out.push_back(ev[i]);
  }
  return out;
}

struct ScanResult {
  double loglik = kNegInf;
  double location = 0.0;
  bool found = false;
};

// best insertion of one additional change point into fixed, by profile
// likelihood over the candidate grid
ScanResult scan_insertion(const ArmData& ad, const std::vector<double>& cands,
                          const std::vector<double>& fixed, double gamma_init) {
  ScanResult best;
  double gamma_warm = gamma_init;
  std::vector<double> cps(fixed.size() + 1);
  for (double tau : cands) {
    if (std::find(fixed.begin(), fixed.end(), tau) != fixed.end()) continue;
    cps.assign(fixed.begin(), fixed.end());
    cps.push_back(tau);
    std::sort(cps.begin(), cps.end());
    const double ll = profile_loglik(ad, cps, &gamma_warm);
    if (ll > best.loglik) {
      best = {ll, tau, true};
    }
  }
  return best;
}

}  // namespace

FittedPwe fit_with_changepoints(const std::vector<ObservedRecord>& records,
                                int arm, int k) {
  if (k < 0) throw std::invalid_argument("fit_with_changepoints: negative k");
  if (k == 0) {
    return fit_piecewise_exponential(expand_records(records, {}, arm), {});
  }
  const ArmData ad = collect_arm(records, arm);
  const auto cands = candidate_grid(ad);
  if (cands.empty()) {
    throw std::runtime_error("change point search: too few events");
  }

  std::vector<double> locs;
  double gamma_cur = 0.0;
  for (int level = 0; level < k; ++level) {
    const auto best = scan_insertion(ad, cands, locs, gamma_cur);
    if (!best.found || best.loglik == kNegInf) {
      throw std::runtime_error("change point search: too few events");
    }
    locs.push_back(best.location);
    std::sort(locs.begin(), locs.end());
    profile_loglik(ad, locs, &gamma_cur);
  }

  if (k > 1) {  // one coordinate-wise refinement pass
    for (int pos = 0; pos < k; ++pos) {
      std::vector<double> others;
      for (int q = 0; q < k; ++q) {
        if (q != pos) others.push_back(locs[q]);
      }
      const double base = profile_loglik(ad, locs, &gamma_cur);
      const auto best = scan_insertion(ad, cands, others, gamma_cur);
      if (best.found && best.loglik > base + 1e-10) {
        others.push_back(best.location);
        std::sort(others.begin(), others.end());
        locs = others;
      }
    }
  }

  return fit_piecewise_exponential(expand_records(records, locs, arm), locs);
}

ChangepointScan detect_changepoints(const std::vector<ObservedRecord>& records,
                                    int arm, double alpha_star, int k_max) {
  if (!(alpha_star > 0.0 && alpha_star < 1.0)) {
    throw std::invalid_argument("detect_changepoints: alpha outside (0,1)");
  }
  if (k_max < 0) throw std::invalid_argument("detect_changepoints: negative cap");

  ChangepointScan scan;
  scan.fit = fit_with_changepoints(records, arm, 0);

  int events = 0;
  for (const auto& r : records) {
    if (r.arm == arm && r.event) ++events;
  }

  double level_alpha = alpha_star;
  for (int k = 1; k <= k_max; ++k, level_alpha *= 0.5) {
    if (events < 2 * (k + 1)) {
      scan.enough_events = false;
      break;
    }
    FittedPwe next;
    try {
      next = fit_with_changepoints(records, arm, k);
    } catch (const std::runtime_error&) {
      scan.enough_events = false;
      break;
    }
    const double lrt = std::max(0.0, 2.0 * (next.loglik - scan.fit.loglik));
    scan.lrt.push_back(lrt);
    if (lrt <= chi_squared_quantile(1.0 - level_alpha, 2.0)) break;
    scan.fit = std::move(next);
    scan.k = k;
  }
  return scan;
}

TrueCutpoint predicted_cutpoint(const FittedPwe& control,
                                const FittedPwe& experimental, double t_star,
                                const BiomarkerSupport& support) {
  return true_cutpoint(ArmPair{control.to_model(), experimental.to_model()},
                       t_star, support);
}

RmstRegression fit_rmst_regression(const std::vector<ObservedRecord>& records,
                                   double t_star) {
  if (records.empty()) throw std::invalid_argument("rmst regression: no records");
  if (!(t_star > 0.0)) {
    throw std::invalid_argument("rmst regression: truncation time must be positive");
  }
  double max_u[2] = {0.0, 0.0};
  for (const auto& r : records) {
    if (r.arm != 0 && r.arm != 1) {
      throw std::invalid_argument("rmst regression: arm must be 0 or 1");
    }
    max_u[r.arm] = std::max(max_u[r.arm], r.time);
  }
  if (max_u[0] < t_star || max_u[1] < t_star) {
    throw std::invalid_argument("rmst regression: truncation time beyond follow-up");
  }

  std::vector<SurvivalSample> pooled;
  pooled.reserve(records.size());
  for (const auto& r : records) pooled.push_back({r.time, r.event, 1.0});
  const StepSurvival g = censoring_km(pooled);

  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  Eigen::Vector4d b = Eigen::Vector4d::Zero();
  std::vector<double> wts(records.size(), 0.0), ys(records.size(), 0.0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const double y = std::min(r.time, t_star);
    ys[i] = y;
    const bool dstar = r.event || r.time >= t_star;
    if (!dstar) continue;
    const double gy = g.at_left(y);
    if (!(gy > 0.0)) {
      throw std::runtime_error("rmst regression: censoring support violated");
    }
    wts[i] = 1.0 / gy;
    const Eigen::Vector4d xv(1.0, static_cast<double>(r.arm), r.x,
                             static_cast<double>(r.arm) * r.x);
    a += wts[i] * xv * xv.transpose();
    b += wts[i] * y * xv;
  }

  Eigen::FullPivLU<Eigen::Matrix4d> lu(a);
  if (!lu.isInvertible()) {
    throw std::runtime_error("rmst regression: singular design");
  }
  RmstRegression fit;
  fit.beta = lu.solve(b);
  fit.n = static_cast<int>(records.size());

  Eigen::Matrix4d meat = Eigen::Matrix4d::Zero();
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (wts[i] == 0.0) continue;
    const auto& r = records[i];
    const Eigen::Vector4d xv(1.0, static_cast<double>(r.arm), r.x,
                             static_cast<double>(r.arm) * r.x);
    const double e = ys[i] - xv.dot(fit.beta);
    meat += (wts[i] * e) * (wts[i] * e) * xv * xv.transpose();
  }
  const Eigen::Matrix4d a_inv = lu.inverse();
  fit.cov = a_inv * meat * a_inv;
  return fit;
}

double interaction_z(const RmstRegression& fit) {
  const double v = fit.cov(3, 3);
  if (!(v > 0.0)) throw std::runtime_error("interaction test: zero variance");
  return fit.beta[3] / std::sqrt(v);
}

std::optional<double> regression_cutpoint(const RmstRegression& fit,
                                          const BiomarkerSupport& support) {
  if (!(fit.beta[3] > 0.0)) return std::nullopt;
  return std::clamp(-fit.beta[1] / fit.beta[3], support.lower, support.upper);
}

}  // namespace rmstd
