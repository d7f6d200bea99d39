#include "rmstd/design.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>

#include "rmstd/calibration.hpp"
#include "rmstd/rng.hpp"
#include "rmstd/stats.hpp"

namespace rmstd {

void DesignConfig::validate() const {
  arms.control.validate();
  arms.experimental.validate();
  if (!(support.lower >= 0.0 && support.lower < support.upper &&
        support.upper <= 1.0)) {
    throw std::invalid_argument("design: invalid biomarker support");
  }
  plan.validate();
  if (!(t_star > 0.0 && t_star <= plan.t3)) {
    throw std::invalid_argument("design: truncation time outside follow-up");
  }
  if (!(alpha0 > 0.0 && alpha0 < 0.5) || !(alpha_tilde > 0.0 && alpha_tilde < 0.5)) {
    throw std::invalid_argument("design: test levels must lie in (0, 0.5)");
  }
  if (estimator < 1 || estimator > 5) {
    throw std::invalid_argument("design: estimator index must be 1..5");
  }
  if (!(cp_alpha > 0.0 && cp_alpha < 1.0) || cp_max < 0) {
    throw std::invalid_argument("design: invalid change point scan settings");
  }
}

DesignTruth derive_truth(const DesignConfig& cfg) {
  cfg.validate();
  DesignTruth t;
  t.delta_overall = marginal_rmst_diff(cfg.arms, cfg.t_star, cfg.support.lower,
                                       cfg.support.upper);
  const TrueCutpoint tc = true_cutpoint(cfg.arms, cfg.t_star, cfg.support);
  if (tc.value && tc.rising) {
    t.cutpoint = tc.value;
    t.rising = true;
    t.delta_pos =
        marginal_rmst_diff(cfg.arms, cfg.t_star, *tc.value, cfg.support.upper);
  } else if (tc.kind == CutpointKind::always_positive) {
    t.delta_pos = t.delta_overall;  // everyone benefits, subgroup is everyone
  }
  return t;
}

namespace {

void parallel_run(int n, int workers, const std::function<void(int)>& f) {
  workers = std::max(1, workers);
  if (workers == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  const auto loop = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) f(i);
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(loop);
  loop();
  for (auto& th : pool) th.join();
}

std::array<std::optional<EstimateResult>, 5> estimate_block(
    const AnalysisSet& set, double t_star) {
  std::array<std::optional<EstimateResult>, 5> out;
  for (int w = 1; w <= 5; ++w) {
    try {
      out[w - 1] = estimate(set, t_star, w);
    } catch (const std::exception&) {
      out[w - 1] = std::nullopt;
    }
  }
  return out;
}

std::array<std::optional<EstimateResult>, 5> subgroup_block(
    const DesignConfig& cfg, const std::vector<ObservedRecord>& recs,
    double cut, const RmstRegression& fit, bool* fallback) {
  AnalysisSet set;
  std::vector<double> pos_x, stage1_x;
  for (const auto& r : recs) {
    if (r.x > cut) {
      set.records.push_back(r);
      pos_x.push_back(r.x);
      if (r.stage == 1) stage1_x.push_back(r.x);
    }
  }
  if (set.records.empty()) return {};

  set.weights.assign(set.records.size(), 1.0);
  try {
    Eigen::Vector2d target;
    if (cfg.analytic_target) {
      target = uniform_moments(std::max(cut, cfg.support.lower),
                               cfg.support.upper);
    } else {
      target = target_moments(stage1_x);  // throws when no stage-1 positives
    }
    set.weights = calibrate_weights(pos_x, target).weights;
  } catch (const std::exception&) {
    if (fallback) *fallback = true;  // keep unit weights
  }
  set.beta = fit.beta;
  set.beta_cov = fit.cov;
  return estimate_block(set, cfg.t_star);
}

}  // namespace

ReplicateResult run_replicate(const DesignConfig& cfg, const DesignTruth& truth,
                              std::uint64_t seed) {
  ReplicateResult rep;
  try {
    Rng rng(seed);
    auto stage1 = simulate_stage1(cfg.arms, cfg.support, cfg.plan, rng);

    std::optional<double> enrich_cut;
    if (cfg.enrichment) {
      const auto interim = observe(stage1, cfg.plan.t1);
      try {
        FittedPwe fits[2];
        for (int arm = 0; arm < 2; ++arm) {
          const auto& model = arm == 1 ? cfg.arms.experimental : cfg.arms.control;
          switch (cfg.mode) {
            case PredictionMode::known_locations:
              fits[arm] = fit_piecewise_exponential(
                  expand_records(interim, model.change_points, arm),
                  model.change_points);
              break;
            case PredictionMode::known_count:
              fits[arm] = fit_with_changepoints(
                  interim, arm, static_cast<int>(model.change_points.size()));
              break;
            case PredictionMode::estimated_count: {
              const auto scan =
                  detect_changepoints(interim, arm, cfg.cp_alpha, cfg.cp_max);
              rep.detected_k[arm] = scan.k;
              fits[arm] = scan.fit;
              break;
            }
          }
        }
        const auto pred =
            predicted_cutpoint(fits[0], fits[1], cfg.t_star, cfg.support);
        if (pred.value && pred.rising && *pred.value < cfg.support.upper) {
          rep.c0 = pred.value;
          rep.enriched = true;
          enrich_cut = pred.value;
        } else {
          rep.no_usable_cutpoint = true;
        }
      } catch (const std::exception&) {
        rep.no_usable_cutpoint = true;
      }
    }

    auto stage2 = simulate_stage2(cfg.arms, cfg.support, cfg.plan, enrich_cut, rng);
    auto patients = std::move(stage1);
    patients.insert(patients.end(), stage2.begin(), stage2.end());
    const auto recs = observe(patients, cfg.plan.t3);

    const auto fit = fit_rmst_regression(recs, cfg.t_star);
    rep.z_interaction = interaction_z(fit);
    rep.beta3 = fit.beta[3];
    rep.se_beta3 = std::sqrt(fit.cov(3, 3));
    rep.c_final = regression_cutpoint(fit, cfg.support);

    if (truth.cutpoint) {
      for (const auto& r : recs) {
        if (r.x < *truth.cutpoint) ++rep.true_negatives;
      }
    }

    AnalysisSet all;
    all.records = recs;
    all.weights.assign(recs.size(), 1.0);
    all.beta = fit.beta;
    all.beta_cov = fit.cov;
    rep.overall = estimate_block(all, cfg.t_star);

    if (rep.c_final) {
      for (const auto& r : recs) {
        if (r.x > *rep.c_final) ++rep.n_positive;
      }
      rep.at_estimated = subgroup_block(cfg, recs, *rep.c_final, fit,
                                        &rep.calibration_fallback);
    }
    if (truth.cutpoint) {
      rep.at_true = subgroup_block(cfg, recs, *truth.cutpoint, fit,
                                   &rep.calibration_fallback_true);
    }
  } catch (const std::exception& e) {
    rep.failed = true;
    rep.failure = e.what();
  }
  return rep;
}

std::vector<ReplicateResult> run_replicates(const DesignConfig& cfg,
                                            const DesignTruth& truth, int reps,
                                            std::uint64_t base_seed,
                                            int workers) {
  if (reps < 1) throw std::invalid_argument("run_replicates: need at least one");
  std::vector<ReplicateResult> out(reps);
  parallel_run(reps, workers, [&](int i) {
    out[i] = run_replicate(cfg, truth, replicate_seed(base_seed, i));
  });
  return out;
}

TrialDecision decide(const ReplicateResult& rep, int estimator, double q0,
                     double q) {
  TrialDecision d;
  if (rep.failed) return d;
  d.interaction_significant = rep.z_interaction > q0;
  d.hypothesis = d.interaction_significant ? 1 : 2;
  const auto& block = d.interaction_significant ? rep.at_estimated : rep.overall;
  const auto& est = block[estimator - 1];
  if (est) {
    d.z = est->z();
    d.rejected = d.z > q;
  } else {
    d.z = std::numeric_limits<double>::quiet_NaN();
  }
  return d;
}

CriticalValues calibrate_critical_values(const DesignConfig& cfg,
                                         double family_alpha,
                                         const std::vector<double>& alpha_grid,
                                         int reps, std::uint64_t seed,
                                         int workers) {
  if (alpha_grid.empty()) {
    throw std::invalid_argument("critical values: empty alpha grid");
  }
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    if (!(alpha_grid[i] > 0.0 && alpha_grid[i] < 0.5) ||
        (i > 0 && alpha_grid[i] <= alpha_grid[i - 1])) {
      throw std::invalid_argument("critical values: grid must be increasing in (0, 0.5)");
    }
  }
  if (!(family_alpha > 0.0 && family_alpha < 0.5)) {
    throw std::invalid_argument("critical values: invalid family alpha");
  }

  DesignConfig null_cfg = cfg;
  null_cfg.arms.experimental = cfg.arms.control;
  const DesignTruth null_truth;
  const auto reps_out = run_replicates(null_cfg, null_truth, reps, seed, workers);

  CriticalValues cv;
  cv.q0 = normal_quantile(1.0 - cfg.alpha0);

  int valid = 0;
  for (const auto& r : reps_out) valid += r.failed ? 0 : 1;
  if (valid == 0) throw std::runtime_error("critical values: all replicates failed");
  cv.reps = valid;

  bool found = false;
  for (double a : alpha_grid) {
    const double q = normal_quantile(1.0 - a);
    int rej = 0;
    for (const auto& r : reps_out) {
      if (!r.failed && decide(r, cfg.estimator, cv.q0, q).rejected) ++rej;
    }
    const double fwer = static_cast<double>(rej) / valid;
    cv.fwer_grid.emplace_back(a, fwer);
    if (fwer <= family_alpha) {
      cv.alpha_tilde = a;
      cv.q = q;
      found = true;
    }
  }
  if (!found) {
    throw std::runtime_error("critical values: no grid point holds the familywise error");
  }
  return cv;
}

SigmaEstimates monte_carlo_sigma(const DesignConfig& cfg,
                                 const DesignTruth& truth, int dataset_size,
                                 int datasets, std::uint64_t seed,
                                 int workers) {
  if (!truth.cutpoint) {
    throw std::invalid_argument("sigma: design truth has no cutpoint");
  }
  if (dataset_size < 40 || dataset_size % 4 != 0) {
    throw std::invalid_argument("sigma: dataset size must be a multiple of four");
  }
  if (datasets < 2) throw std::invalid_argument("sigma: need at least two datasets");

  DesignConfig big = cfg;
  big.plan.n1 = dataset_size / 4;
  big.plan.n2 = dataset_size / 4;
  const double cut = *truth.cutpoint;

  struct Draw {
    bool ok = false;
    double beta3 = 0.0;
    std::array<double, 5> pos{};      // sqrt(n+)-scaled deviations
    std::array<double, 5> overall{};
    std::array<bool, 5> pos_ok{};
    std::array<bool, 5> overall_ok{};
  };
  std::vector<Draw> draws(datasets);

  parallel_run(datasets, workers, [&](int b) {
    Draw& d = draws[b];
    try {
      Rng rng(replicate_seed(seed, b));
      auto pats = simulate_stage1(big.arms, big.support, big.plan, rng);
      auto s2 = simulate_stage2(big.arms, big.support, big.plan, std::nullopt, rng);
      pats.insert(pats.end(), s2.begin(), s2.end());
      const auto recs = observe(pats, big.plan.t3);
      const auto fit = fit_rmst_regression(recs, big.t_star);
      d.beta3 = fit.beta[3];
      d.ok = true;

      AnalysisSet all;
      all.records = recs;
      all.weights.assign(recs.size(), 1.0);
      all.beta = fit.beta;
      all.beta_cov = fit.cov;
      const double root_n = std::sqrt(static_cast<double>(recs.size()));
      for (int w = 1; w <= 5; ++w) {
        try {
          const auto est = estimate(all, big.t_star, w);
          d.overall[w - 1] = root_n * (est.delta - truth.delta_overall);
          d.overall_ok[w - 1] = true;
        } catch (const std::exception&) {
        }
      }

      AnalysisSet pos;
      for (const auto& r : recs) {
        if (r.x > cut) pos.records.push_back(r);
      }
      if (!pos.records.empty()) {
        pos.weights.assign(pos.records.size(), 1.0);
        pos.beta = fit.beta;
        pos.beta_cov = fit.cov;
        const double root_np = std::sqrt(static_cast<double>(pos.records.size()));
        for (int w = 1; w <= 5; ++w) {
          try {
            const auto est = estimate(pos, big.t_star, w);
            d.pos[w - 1] = root_np * (est.delta - truth.delta_pos);
            d.pos_ok[w - 1] = true;
          } catch (const std::exception&) {
          }
        }
      }
    } catch (const std::exception&) {
      d.ok = false;
    }
  });

  SigmaEstimates sig;
  int n_ok = 0;
  double b3_sum = 0.0;
  for (const auto& d : draws) {
    if (!d.ok) continue;
    ++n_ok;
    b3_sum += d.beta3;
  }
  if (n_ok < 2) throw std::runtime_error("sigma: too few usable datasets");
  sig.datasets = n_ok;
  sig.beta3 = b3_sum / n_ok;

  double b3_ss = 0.0;
  std::array<double, 5> pos_ss{}, ov_ss{};
  std::array<int, 5> pos_n{}, ov_n{};
  const double root_m = std::sqrt(static_cast<double>(dataset_size));
  for (const auto& d : draws) {
    if (!d.ok) continue;
    const double dev = root_m * (d.beta3 - sig.beta3);
    b3_ss += dev * dev;
    for (int w = 0; w < 5; ++w) {
      if (d.pos_ok[w]) {
        pos_ss[w] += d.pos[w] * d.pos[w];
        ++pos_n[w];
      }
      if (d.overall_ok[w]) {
        ov_ss[w] += d.overall[w] * d.overall[w];
        ++ov_n[w];
      }
    }
  }
  sig.sigma_beta3 = std::sqrt(b3_ss / n_ok);
  for (int w = 0; w < 5; ++w) {
    sig.sigma_pos[w] = pos_n[w] ? std::sqrt(pos_ss[w] / pos_n[w]) : 0.0;
    sig.sigma_overall[w] = ov_n[w] ? std::sqrt(ov_ss[w] / ov_n[w]) : 0.0;
  }
  return sig;
}

double expected_positive_count(const DesignConfig& cfg,
                               const DesignTruth& truth, double n_total) {
  const double lo = cfg.support.lower, hi = cfg.support.upper;
  const double c = std::clamp(truth.cutpoint.value_or(lo), lo, hi);
  const double frac = (hi - c) / (hi - lo);
  if (cfg.enrichment) return 0.5 * n_total * (1.0 + frac);
  return n_total * frac;
}

double global_power(const DesignConfig& cfg, const DesignTruth& truth,
                    const SigmaEstimates& sig, double q0, double q,
                    double n_total) {
  const int e = cfg.estimator - 1;
  if (!(sig.sigma_beta3 > 0.0) || !(sig.sigma_pos[e] > 0.0) ||
      !(sig.sigma_overall[e] > 0.0)) {
    throw std::invalid_argument("power: missing sigma estimates");
  }
  const double root_n = std::sqrt(n_total);
  const double eta =
      1.0 - normal_cdf(q0 - sig.beta3 * root_n / sig.sigma_beta3);
  const double n_pos = expected_positive_count(cfg, truth, n_total);
  const double p_sub =
      1.0 - normal_cdf(q - truth.delta_pos * std::sqrt(n_pos) / sig.sigma_pos[e]);
  const double p_all =
      1.0 - normal_cdf(q - truth.delta_overall * root_n / sig.sigma_overall[e]);
  return eta * p_sub + (1.0 - eta) * p_all;
}

int sample_size(const DesignConfig& cfg, const DesignTruth& truth,
                const SigmaEstimates& sig, double q0, double q,
                double target_power) {
  if (!(target_power > 0.0 && target_power < 1.0)) {
    throw std::invalid_argument("sample size: target power outside (0,1)");
  }
  const auto power_at = [&](int n) {
    return global_power(cfg, truth, sig, q0, q, static_cast<double>(n));
  };
  int lo = 10, hi = 1 << 21;
  if (power_at(hi) < target_power) {
    throw std::runtime_error("sample size: target power unreachable");
  }
  if (power_at(lo) >= target_power) return lo;
  while (hi - lo > 2) {
    int mid = (lo + hi) / 2;
    mid += mid % 2;
    if (mid >= hi) mid = hi - 2;
    if (power_at(mid) >= target_power) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace rmstd
