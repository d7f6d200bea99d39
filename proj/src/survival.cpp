#include "rmstd/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rmstd {

namespace {

struct RiskGroup {
  double time;
  double at_risk;     // weighted at-risk just before time (group included)
  double events;      // weighted events at time
  double sq_at_risk;  // sum of squared weights at risk
  double sq_events;   // sum of squared weights of events (unused by KM)
  long count_at_risk; // unweighted at-risk
  long count_events;  // unweighted events
};

std::vector<RiskGroup> risk_sweep(const std::vector<SurvivalSample>& samples,
                                  const char* who) {
  if (samples.empty()) {
    throw std::invalid_argument(std::string(who) + ": no samples");
  }
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return samples[a].time < samples[b].time;
  });

  double total = 0.0;
  for (const auto& s : samples) {
    if (!std::isfinite(s.time) || s.time < 0.0) {
      throw std::invalid_argument(std::string(who) + ": invalid time");
    }
    if (!std::isfinite(s.weight) || s.weight < 0.0) {
      throw std::invalid_argument(std::string(who) + ": invalid weight");
    }
    total += s.weight;
  }
  if (total <= 0.0) {
    throw std::invalid_argument(std::string(who) + ": degenerate weights");
  }

  // suffix sums accumulated from the right keep late at-risk totals exact
  const std::size_t n = idx.size();
  std::vector<double> suffix(n + 1, 0.0), suffix_sq(n + 1, 0.0);
  std::vector<long> suffix_count(n + 1, 0);
  for (std::size_t i = n; i-- > 0;) {
    const double w = samples[idx[i]].weight;
    suffix[i] = suffix[i + 1] + w;
    suffix_sq[i] = suffix_sq[i + 1] + w * w;
    suffix_count[i] = suffix_count[i + 1] + 1;
  }

  std::vector<RiskGroup> groups;
  std::size_t i = 0;
  while (i < n) {
    const double t = samples[idx[i]].time;
    RiskGroup g{t, suffix[i], 0.0, suffix_sq[i], 0.0, suffix_count[i], 0};
    std::size_t j = i;
    for (; j < n && samples[idx[j]].time == t; ++j) {
      if (samples[idx[j]].event) {
        g.events += samples[idx[j]].weight;
        g.sq_events += samples[idx[j]].weight * samples[idx[j]].weight;
        ++g.count_events;
      }
    }
    groups.push_back(g);
    i = j;
  }
  return groups;
}

StepSurvival product_limit(const std::vector<RiskGroup>& groups) {
  StepSurvival out;
  double s = 1.0;
  for (const auto& g : groups) {
    if (g.events <= 0.0) continue;
    s *= std::max(0.0, 1.0 - g.events / g.at_risk);
    out.times.push_back(g.time);
    out.values.push_back(s);
  }
  return out;
}

}  // namespace

double StepSurvival::at(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

double StepSurvival::at_left(double t) const {
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

double StepSurvival::integral(double t) const {
  if (t <= 0.0) return 0.0;
  double area = 0.0, prev = 0.0, s = 1.0;
  for (std::size_t k = 0; k < times.size() && times[k] < t; ++k) {
    area += s * (times[k] - prev);
    prev = times[k];
    s = values[k];
  }
  return area + s * (t - prev);
}

StepSurvival km_curve(const std::vector<SurvivalSample>& samples) {
  return product_limit(risk_sweep(samples, "km_curve"));
}

StepSurvival censoring_km(const std::vector<SurvivalSample>& samples) {
  std::vector<SurvivalSample> flipped(samples);
  for (auto& s : flipped) s.event = !s.event;
  return product_limit(risk_sweep(flipped, "censoring_km"));
}

double rmst(const StepSurvival& curve, double t_star) {
  if (!(t_star >= 0.0)) {
    throw std::invalid_argument("rmst: negative truncation time");
  }
  return curve.integral(t_star);
}

std::vector<std::pair<double, double>> nelson_aalen(
    const std::vector<SurvivalSample>& samples) {
  std::vector<std::pair<double, double>> out;
  double h = 0.0;
  for (const auto& g : risk_sweep(samples, "nelson_aalen")) {
    if (g.events <= 0.0) continue;
    h += g.events / g.at_risk;
    out.emplace_back(g.time, h);
  }
  return out;
}

namespace {

// sum over event times u <= t_star of R(u)^2 * term(group), where
// R(u) = integral of the arm's survival curve over [u, t_star]
template <class Term>
double residual_area_sum(const std::vector<RiskGroup>& groups, double t_star,
                         Term term) {
  double total_area = 0.0, prev = 0.0, s = 1.0;
  std::vector<double> area_at(groups.size());
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (groups[k].time > t_star) {
      area_at[k] = total_area + s * (t_star - prev);
      continue;
    }
    total_area += s * (groups[k].time - prev);
    prev = groups[k].time;
    area_at[k] = total_area;
    if (groups[k].events > 0.0) {
      s *= std::max(0.0, 1.0 - groups[k].events / groups[k].at_risk);
    }
  }
  const double full = total_area + s * (t_star - prev);

  double sum = 0.0;
  bool any_event = false;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto& g = groups[k];
    if (g.time > t_star || g.events <= 0.0) continue;
    any_event = true;
    const double r = full - area_at[k];
    // exhausting the risk set zeroes the curve, hence the residual area;
    // such an event cannot add variance even though its factor diverges
    if (r <= 0.0) continue;
    sum += r * r * term(g);
  }
  if (!any_event) {
    throw std::runtime_error("variance undefined: no events before truncation time");
  }
  return sum;
}

double greenwood_arm(const std::vector<SurvivalSample>& arm, double t_star,
                     const char* who) {
  auto groups = risk_sweep(arm, who);
  for (auto& g : groups) {  // unweighted counts drive the naive form
    g.at_risk = static_cast<double>(g.count_at_risk);
    g.events = static_cast<double>(g.count_events);
  }
  return residual_area_sum(groups, t_star, [](const RiskGroup& g) {
    const double denom = g.at_risk * (g.at_risk - g.events);
    return denom > 0.0 ? g.events / denom
                       : std::numeric_limits<double>::infinity();
  });
}

double weighted_arm(const std::vector<SurvivalSample>& arm, double t_star,
                    const char* who) {
  const auto groups = risk_sweep(arm, who);
  return residual_area_sum(groups, t_star, [](const RiskGroup& g) {
    // effective size W = Ytilde^2 / sum of squared weights at risk
    const double w_eff = g.at_risk * g.at_risk / g.sq_at_risk;
    const double denom = w_eff * (g.at_risk - g.events);
    return denom > 0.0 ? g.events / denom
                       : std::numeric_limits<double>::infinity();
  });
}

}  // namespace

double naive_rmst_variance(const std::vector<SurvivalSample>& arm0,
                           const std::vector<SurvivalSample>& arm1,
                           double t_star) {
  const double n_plus = static_cast<double>(arm0.size() + arm1.size());
  return n_plus * (greenwood_arm(arm0, t_star, "naive_rmst_variance") +
                   greenwood_arm(arm1, t_star, "naive_rmst_variance"));
}

double cw_km_variance(const std::vector<SurvivalSample>& arm0,
                      const std::vector<SurvivalSample>& arm1,
                      double t_star) {
  const double n_plus = static_cast<double>(arm0.size() + arm1.size());
  return n_plus * (weighted_arm(arm0, t_star, "cw_km_variance") +
                   weighted_arm(arm1, t_star, "cw_km_variance"));
}

}  // namespace rmstd
