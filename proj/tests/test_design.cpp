#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "rmstd/design.hpp"
#include "rmstd/stats.hpp"

using namespace rmstd;

namespace {

DesignConfig sim_config(int per_arm) {
  DesignConfig cfg;
  cfg.arms.control.rates = {0.9};
  cfg.arms.control.form = CovariateForm::times_one_minus_x;
  cfg.arms.experimental.change_points = {0.25};
  cfg.arms.experimental.rates = {0.9, 0.45};
  cfg.arms.experimental.gamma = 0.9;
  cfg.arms.experimental.form = CovariateForm::times_one_minus_x;
  cfg.support = {0.0, 1.0};
  cfg.plan = {per_arm, per_arm, 1.0, 2.0, 4.0, 0.12};
  cfg.t_star = 2.0;
  cfg.mode = PredictionMode::known_locations;
  return cfg;
}

EstimateResult fake_estimate(double delta, double sigma2, int n_plus) {
  EstimateResult e;
  e.delta = delta;
  e.sigma2 = sigma2;
  e.n_plus = n_plus;
  return e;
}

}  // namespace

TEST_CASE("configuration validation") {
  auto cfg = sim_config(100);
  CHECK_NOTHROW(cfg.validate());
  cfg.support = {0.8, 0.2};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = sim_config(100);
  cfg.t_star = 5.0;  // beyond the analysis time
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = sim_config(100);
  cfg.estimator = 6;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = sim_config(100);
  cfg.alpha0 = 0.6;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("derived truth matches the frozen reference values") {
  const auto truth = derive_truth(sim_config(100));
  REQUIRE(truth.cutpoint.has_value());
  CHECK(truth.rising);
  CHECK(*truth.cutpoint == doctest::Approx(0.5188061326).epsilon(1e-7));
  CHECK(truth.delta_pos == doctest::Approx(0.1339245845).epsilon(1e-6));
  CHECK(truth.delta_overall == doctest::Approx(-0.0117671319).epsilon(1e-5));
}

TEST_CASE("uniform benefit yields no cutpoint and equal effects") {
  auto cfg = sim_config(100);
  cfg.arms.experimental.change_points.clear();
  cfg.arms.experimental.rates = {0.45};
  cfg.arms.experimental.gamma = 0.0;
  const auto truth = derive_truth(cfg);
  CHECK_FALSE(truth.cutpoint.has_value());
  CHECK(truth.delta_pos == doctest::Approx(truth.delta_overall));
  CHECK(truth.delta_overall > 0.0);
}

TEST_CASE("two-step decision rule") {
  ReplicateResult rep;
  rep.z_interaction = 2.5;
  rep.at_estimated[3] = fake_estimate(0.3, 1.0, 100);  // z = 3
  rep.overall[3] = fake_estimate(0.05, 1.0, 100);      // z = 0.5

  auto d = decide(rep, 4, 1.96, 2.0);
  CHECK(d.interaction_significant);
  CHECK(d.hypothesis == 1);
  CHECK(d.z == doctest::Approx(3.0));
  CHECK(d.rejected);

  // gate not passed: the overall hypothesis is tested instead
  d = decide(rep, 4, 2.6, 2.0);
  CHECK_FALSE(d.interaction_significant);
  CHECK(d.hypothesis == 2);
  CHECK(d.z == doctest::Approx(0.5));
  CHECK_FALSE(d.rejected);

  // missing estimate: no rejection, undefined statistic
  rep.at_estimated[3] = std::nullopt;
  d = decide(rep, 4, 1.96, 2.0);
  CHECK(d.hypothesis == 1);
  CHECK(std::isnan(d.z));
  CHECK_FALSE(d.rejected);

  ReplicateResult broken;
  broken.failed = true;
  broken.z_interaction = 5.0;
  d = decide(broken, 4, 1.96, 2.0);
  CHECK_FALSE(d.interaction_significant);
  CHECK_FALSE(d.rejected);
}

TEST_CASE("replicates are reproducible and seed-sensitive") {
  const auto cfg = sim_config(150);
  const auto truth = derive_truth(cfg);
  const auto a = run_replicate(cfg, truth, 777);
  const auto b = run_replicate(cfg, truth, 777);
  const auto c = run_replicate(cfg, truth, 778);
  REQUIRE_FALSE(a.failed);
  CHECK(a.z_interaction == b.z_interaction);
  CHECK(a.c0 == b.c0);
  CHECK(a.n_positive == b.n_positive);
  REQUIRE(a.overall[0].has_value());
  CHECK(a.overall[0]->delta == b.overall[0]->delta);
  CHECK(a.z_interaction != c.z_interaction);
}

TEST_CASE("worker count does not change the results") {
  const auto cfg = sim_config(120);
  const auto truth = derive_truth(cfg);
  const auto one = run_replicates(cfg, truth, 9, 2023, 1);
  const auto three = run_replicates(cfg, truth, 9, 2023, 3);
  REQUIRE(one.size() == three.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].failed == three[i].failed);
    CHECK(one[i].z_interaction == three[i].z_interaction);
    CHECK(one[i].c0 == three[i].c0);
    CHECK(one[i].enriched == three[i].enriched);
    for (int w = 0; w < 5; ++w) {
      REQUIRE(one[i].overall[w].has_value() == three[i].overall[w].has_value());
      if (one[i].overall[w]) {
        CHECK(one[i].overall[w]->delta == three[i].overall[w]->delta);
        CHECK(one[i].overall[w]->sigma2 == three[i].overall[w]->sigma2);
      }
    }
  }
}

TEST_CASE("an enriched replicate fills every analysis block") {
  const auto cfg = sim_config(400);
  const auto truth = derive_truth(cfg);
  int enriched = 0, filled = 0, reps = 0;
  for (std::uint64_t seed = 100; seed < 112; ++seed) {
    const auto rep = run_replicate(cfg, truth, seed);
    REQUIRE_FALSE(rep.failed);
    ++reps;
    if (!rep.enriched) continue;
    ++enriched;
    REQUIRE(rep.c0.has_value());
    CHECK(*rep.c0 > cfg.support.lower);
    CHECK(*rep.c0 < cfg.support.upper);
    CHECK_FALSE(rep.no_usable_cutpoint);
    CHECK(std::isfinite(rep.z_interaction));
    CHECK(rep.se_beta3 > 0.0);
    CHECK(rep.true_negatives > 0);
    bool all = rep.at_true[0].has_value() && rep.overall[0].has_value();
    if (rep.c_final) {
      all = all && rep.n_positive > 0 && rep.at_estimated[0].has_value();
    }
    filled += all;
  }
  CHECK(enriched >= reps / 2);
  CHECK(filled == enriched);
}

TEST_CASE("disabling enrichment skips the interim prediction") {
  auto cfg = sim_config(200);
  cfg.enrichment = false;
  const auto truth = derive_truth(cfg);
  const auto rep = run_replicate(cfg, truth, 42);
  REQUIRE_FALSE(rep.failed);
  CHECK_FALSE(rep.enriched);
  CHECK_FALSE(rep.c0.has_value());
  CHECK_FALSE(rep.no_usable_cutpoint);
  CHECK(rep.at_true[0].has_value());
}

TEST_CASE("scan mode records the detected segment counts") {
  auto cfg = sim_config(500);
  cfg.mode = PredictionMode::estimated_count;
  const auto truth = derive_truth(cfg);
  const auto rep = run_replicate(cfg, truth, 314);
  REQUIRE_FALSE(rep.failed);
  CHECK(rep.detected_k[0] >= 0);
  CHECK(rep.detected_k[0] <= cfg.cp_max);
  CHECK(rep.detected_k[1] >= 0);
  CHECK(rep.detected_k[1] <= cfg.cp_max);
}

TEST_CASE("a replicate that cannot reach the final analysis reports failure") {
  auto cfg = sim_config(30);
  cfg.t_star = cfg.plan.t3;  // entries are strictly positive, so follow-up
                             // never reaches the truncation time
  const auto truth = derive_truth(sim_config(30));
  const auto rep = run_replicate(cfg, truth, 5);
  CHECK(rep.failed);
  CHECK_FALSE(rep.failure.empty());
}

TEST_CASE("critical value search holds the familywise error on the grid") {
  auto cfg = sim_config(120);
  cfg.estimator = 1;
  const std::vector<double> grid = {0.01, 0.02, 0.03, 0.05, 0.1};
  const auto cv = calibrate_critical_values(cfg, 0.05, grid, 300, 11, 1);
  CHECK(cv.q0 == doctest::Approx(normal_quantile(1.0 - cfg.alpha0)));
  REQUIRE(cv.fwer_grid.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(cv.fwer_grid[i].first == doctest::Approx(grid[i]));
    if (i > 0) CHECK(cv.fwer_grid[i].second >= cv.fwer_grid[i - 1].second);
  }
  // the result is the largest grid alpha whose empirical rate stays inside
  double expect = 0.0;
  for (const auto& [a, f] : cv.fwer_grid) {
    if (f <= 0.05) expect = a;
  }
  CHECK(cv.alpha_tilde == doctest::Approx(expect));
  CHECK(cv.q == doctest::Approx(normal_quantile(1.0 - expect)));
  CHECK(cv.reps > 0);

  CHECK_THROWS_AS(calibrate_critical_values(cfg, 0.05, {}, 10, 1, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(calibrate_critical_values(cfg, 0.05, {0.02, 0.01}, 10, 1, 1),
                  std::invalid_argument);
  // an impossible family level: nothing on the grid can hold it
  CHECK_THROWS_AS(
      calibrate_critical_values(cfg, 1e-9, {0.2, 0.3}, 200, 11, 1),
      std::runtime_error);
}

TEST_CASE("large-sample deviations are positive and well-formed") {
  const auto cfg = sim_config(100);
  const auto truth = derive_truth(cfg);
  const auto sig = monte_carlo_sigma(cfg, truth, 2000, 80, 77, 1);
  CHECK(sig.datasets == 80);
  CHECK(sig.beta3 > 0.0);
  CHECK(sig.sigma_beta3 > 0.0);
  for (int w = 0; w < 5; ++w) {
    CAPTURE(w);
    CHECK(sig.sigma_pos[w] > 0.0);
    CHECK(std::isfinite(sig.sigma_pos[w]));
    CHECK(sig.sigma_overall[w] > 0.0);
    CHECK(std::isfinite(sig.sigma_overall[w]));
  }

  CHECK_THROWS_AS(monte_carlo_sigma(cfg, truth, 2001, 10, 1, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(monte_carlo_sigma(cfg, truth, 2000, 1, 1, 1),
                  std::invalid_argument);
  DesignTruth flat;
  CHECK_THROWS_AS(monte_carlo_sigma(cfg, flat, 2000, 10, 1, 1),
                  std::invalid_argument);
}

TEST_CASE("expected subgroup size follows the enrichment rule") {
  auto cfg = sim_config(100);
  const auto truth = derive_truth(cfg);
  const double frac = (1.0 - *truth.cutpoint);
  CHECK(expected_positive_count(cfg, truth, 1000.0) ==
        doctest::Approx(500.0 * (1.0 + frac)).epsilon(1e-12));
  cfg.enrichment = false;
  CHECK(expected_positive_count(cfg, truth, 1000.0) ==
        doctest::Approx(1000.0 * frac).epsilon(1e-12));
}

TEST_CASE("power formula, monotonicity, and the size search") {
  const auto cfg = sim_config(100);
  const auto truth = derive_truth(cfg);
  SigmaEstimates sig;
  sig.beta3 = 0.5;
  sig.sigma_beta3 = 2.0;
  sig.sigma_pos.fill(1.0);
  sig.sigma_overall.fill(1.2);

  const double q0 = normal_quantile(0.975), q = normal_quantile(0.975);
  const double n = 800.0;
  const double eta = 1.0 - normal_cdf(q0 - sig.beta3 * std::sqrt(n) / 2.0);
  const double npos = expected_positive_count(cfg, truth, n);
  const double psub = 1.0 - normal_cdf(q - truth.delta_pos * std::sqrt(npos));
  const double pall =
      1.0 - normal_cdf(q - truth.delta_overall * std::sqrt(n) / 1.2);
  CHECK(global_power(cfg, truth, sig, q0, q, n) ==
        doctest::Approx(eta * psub + (1.0 - eta) * pall).epsilon(1e-12));

  CHECK(global_power(cfg, truth, sig, q0, q, 2000.0) >
        global_power(cfg, truth, sig, q0, q, 500.0));

  const int need = sample_size(cfg, truth, sig, q0, q, 0.9);
  CHECK(need % 2 == 0);
  CHECK(global_power(cfg, truth, sig, q0, q, need) >= 0.9);
  CHECK(global_power(cfg, truth, sig, q0, q, need - 2.0) < 0.9);

  CHECK_THROWS_AS(sample_size(cfg, truth, sig, q0, q, 1.1),
                  std::invalid_argument);
  SigmaEstimates empty;
  CHECK_THROWS_AS(global_power(cfg, truth, empty, q0, q, 800.0),
                  std::invalid_argument);
}
