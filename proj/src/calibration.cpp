#include "rmstd/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rmstd {

Eigen::Vector2d target_moments(const std::vector<double>& xs) {
  if (xs.empty()) {
    throw std::invalid_argument("target_moments: no target observations");
  }
  double m1 = 0.0, m2 = 0.0;
  for (double x : xs) {
    m1 += x;
    m2 += x * x;
  }
  const double n = static_cast<double>(xs.size());
  return {m1 / n, m2 / n};
}

Eigen::Vector2d uniform_moments(double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("uniform_moments: empty interval");
  return {0.5 * (lo + hi), (lo * lo + lo * hi + hi * hi) / 3.0};
}

bool calibration_feasible(const std::vector<double>& xs,
                          const Eigen::Vector2d& target) {
  if (xs.empty()) return false;
  std::vector<double> s(xs);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  const double m1 = target[0], m2 = target[1];
  const double eps = 1e-10;

  if (s.size() < 3) {
    // fewer than three support points: only an exact degenerate match works
    return s.size() == 1 && std::abs(m1 - s[0]) < eps &&
           std::abs(m2 - s[0] * s[0]) < eps;
  }
  if (!(m1 > s.front() + eps && m1 < s.back() - eps)) return false;

  // points (x, x^2) sit on a strictly convex curve: the lower hull is the
  // polyline through consecutive support points, the upper hull the chord
  const auto it = std::upper_bound(s.begin(), s.end(), m1);
  const double xl = *(it - 1), xr = *it;
  const double lower = xl * xl + (m1 - xl) * (xl + xr);
  const double chord = s.front() * s.front() +
                       (m1 - s.front()) * (s.front() + s.back());
  return m2 > lower + eps && m2 < chord - eps;
}

CalibrationResult calibrate_weights(const std::vector<double>& xs,
                                    const Eigen::Vector2d& target) {
  const std::size_t n = xs.size();
  if (n == 0) throw std::invalid_argument("calibrate_weights: no observations");
  if (!calibration_feasible(xs, target)) {
    throw std::runtime_error("calibration infeasible");
  }

  CalibrationResult out;
  std::vector<double> s1(n), s2(n);  // centered constraint scores
  for (std::size_t i = 0; i < n; ++i) {
    s1[i] = xs[i] - target[0];
    s2[i] = xs[i] * xs[i] - target[1];
  }
  if (std::all_of(s1.begin(), s1.end(), [](double v) { return std::abs(v) < 1e-14; })) {
    out.weights.assign(n, 1.0 / static_cast<double>(n));
    return out;  // degenerate exact match
  }

  Eigen::Vector2d lam = Eigen::Vector2d::Zero();
  std::vector<double> p(n);

  // dual value, gradient (= moment residual), and Hessian at lam
  const auto eval = [&](const Eigen::Vector2d& l, Eigen::Vector2d* grad,
                        Eigen::Matrix2d* hess) {
    double mx = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
      mx = std::max(mx, l[0] * s1[i] + l[1] * s2[i]);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = std::exp(l[0] * s1[i] + l[1] * s2[i] - mx);
      z += p[i];
    }
    for (std::size_t i = 0; i < n; ++i) p[i] /= z;
    if (grad) {
      grad->setZero();
      hess->setZero();
      for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector2d g(s1[i], s2[i]);
        *grad += p[i] * g;
        *hess += p[i] * g * g.transpose();
      }
      *hess -= *grad * grad->transpose();
    }
    return mx + std::log(z);
  };

  Eigen::Vector2d grad;
  Eigen::Matrix2d hess;
  double val = eval(lam, &grad, &hess);
  out.objective.push_back(val);

  int iter = 0;
  for (; iter < 200; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() < 1e-11) break;
    Eigen::Matrix2d h = hess;
    h.diagonal().array() += 1e-13;
    Eigen::Vector2d dir = -h.ldlt().solve(grad);
    const double slope = grad.dot(dir);
    double t = 1.0;
    double val_new = eval(lam + t * dir, nullptr, nullptr);
    for (int half = 0; half < 60 && val_new > val + 1e-4 * t * slope; ++half) {
      t *= 0.5;
      val_new = eval(lam + t * dir, nullptr, nullptr);
    }
    lam += t * dir;
    val = eval(lam, &grad, &hess);
    out.objective.push_back(val);
  }
  if (grad.lpNorm<Eigen::Infinity>() >= 1e-8) {
    throw std::runtime_error("calibration infeasible");
  }

  eval(lam, nullptr, nullptr);
  out.weights = p;
  out.lambda = lam;
  out.iterations = iter;
  out.max_residual = grad.lpNorm<Eigen::Infinity>();
  return out;
}

}  // namespace rmstd
