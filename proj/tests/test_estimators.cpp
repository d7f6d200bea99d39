#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "rmstd/cutpoint.hpp"
#include "rmstd/estimators.hpp"
#include "rmstd/rng.hpp"

using namespace rmstd;

namespace {

AnalysisSet four_point_set() {
  AnalysisSet s;
  s.records = {{0.5, 1, 1, 1.0, true},
               {0.5, 1, 1, 2.0, true},
               {0.5, 0, 1, 0.5, true},
               {0.5, 0, 1, 2.0, true}};
  s.weights.assign(4, 1.0);
  return s;
}

}  // namespace

TEST_CASE("plain km difference on a hand-checked set") {
  AnalysisSet s;
  s.records = {{0.5, 1, 1, 1.0, true},
               {0.5, 1, 1, 2.0, true},
               {0.5, 0, 1, 0.5, true},
               {0.5, 0, 1, 2.0, true}};
  s.weights.assign(4, 1.0);
  const auto r = estimate(s, 2.0, 1);
  CHECK(r.which == 1);
  CHECK(r.n_plus == 4);
  // arm 1 survival steps 1 -> 1/2 at t=1: area 1 + 0.5; arm 0 steps at 0.5
  CHECK(r.delta == doctest::Approx(1.5 - 1.25).epsilon(1e-12));
  // greenwood areas: 0.5^2/2 and 0.75^2/2, scaled by the pooled count
  CHECK(r.sigma2 == doctest::Approx(4.0 * (0.125 + 0.28125)).epsilon(1e-12));
  CHECK(r.se() == doctest::Approx(std::sqrt(1.625 / 4.0)).epsilon(1e-12));
  CHECK(r.z() == doctest::Approx(0.25 / std::sqrt(1.625 / 4.0)).epsilon(1e-12));
}

TEST_CASE("hajek mean difference without censoring is a mean difference") {
  AnalysisSet s;
  s.records = {{0.2, 1, 1, 1.0, true},
               {0.4, 1, 1, 2.5, true},
               {0.6, 0, 1, 0.5, true},
               {0.8, 0, 1, 2.0, true}};
  s.weights.assign(4, 1.0);
  const auto r = estimate(s, 2.0, 4);
  CHECK(r.delta == doctest::Approx(1.5 - 1.25).epsilon(1e-12));
  CHECK(r.sigma2 == doctest::Approx(1.625).epsilon(1e-12));
}

TEST_CASE("uniform weights reduce the weighted km to the plain one") {
  Rng rng(21);
  AnalysisSet s;
  for (int i = 0; i < 400; ++i) {
    const double t = rng.exponential(i % 2 ? 0.7 : 1.0);
    const double c = rng.uniform(0.5, 4.0);
    s.records.push_back(
        {rng.uniform01(), i % 2, 1, std::min(t, c), t <= c});
  }
  s.weights.assign(400, 0.37);  // any constant scale
  const auto plain = estimate(s, 2.0, 1);
  const auto weighted = estimate(s, 2.0, 2);
  CHECK(weighted.delta == doctest::Approx(plain.delta).epsilon(1e-12));
  CHECK(weighted.sigma2 == doctest::Approx(plain.sigma2).epsilon(1e-9));
}

TEST_CASE("estimates ignore the overall weight scale") {
  Rng rng(22);
  AnalysisSet s;
  for (int i = 0; i < 300; ++i) {
    const double t = rng.exponential(i % 2 ? 0.6 : 1.1);
    const double c = rng.uniform(0.5, 4.0);
    s.records.push_back(
        {rng.uniform01(), i % 2, 1, std::min(t, c), t <= c});
    s.weights.push_back(rng.uniform(0.2, 2.0));
  }
  s.beta << 0.7, 0.2, 0.05, 0.1;
  s.beta_cov = Eigen::Matrix4d::Identity() * 1e-3;
  auto scaled = s;
  for (auto& w : scaled.weights) w *= 123.4;
  for (int which : {2, 3, 4, 5}) {
    const auto a = estimate(s, 1.5, which);
    const auto b = estimate(scaled, 1.5, which);
    CHECK(b.delta == doctest::Approx(a.delta).epsilon(1e-10));
    CHECK(b.sigma2 == doctest::Approx(a.sigma2).epsilon(1e-10));
  }
}

TEST_CASE("augmentation vanishes when the outcome model is zero") {
  Rng rng(23);
  AnalysisSet s;
  for (int i = 0; i < 250; ++i) {
    const double t = rng.exponential(i % 2 ? 0.6 : 1.1);
    const double c = rng.uniform(0.5, 4.0);
    s.records.push_back(
        {rng.uniform01(), i % 2, 1, std::min(t, c), t <= c});
    s.weights.push_back(rng.uniform(0.2, 2.0));
  }
  s.beta.setZero();
  s.beta_cov.setZero();
  const auto plain = estimate(s, 1.5, 4);
  const auto aug = estimate(s, 1.5, 5);
  CHECK(aug.delta == doctest::Approx(plain.delta).epsilon(1e-12));
  CHECK(aug.sigma2 == doctest::Approx(plain.sigma2).epsilon(1e-12));
}

TEST_CASE("integer weights act like duplicated records for the km estimate") {
  Rng rng(24);
  AnalysisSet s, dup;
  for (int i = 0; i < 120; ++i) {
    const double t = rng.exponential(i % 2 ? 0.8 : 1.2);
    const double c = rng.uniform(0.5, 4.0);
    const ObservedRecord r{rng.uniform01(), i % 2, 1, std::min(t, c), t <= c};
    const int k = 1 + static_cast<int>(rng.below(3));
    s.records.push_back(r);
    s.weights.push_back(k);
    for (int j = 0; j < k; ++j) {
      dup.records.push_back(r);
      dup.weights.push_back(1.0);
    }
  }
  const auto a = estimate(s, 1.5, 2);
  const auto b = estimate(dup, 1.5, 1);
  CHECK(a.delta == doctest::Approx(b.delta).epsilon(1e-12));
}

TEST_CASE("model-based estimators agree with the regression they are fed") {
  // exact linear outcome with no censoring: the g-formula difference is
  // beta1 + beta3 * weighted mean of x
  AnalysisSet s;
  double wsum = 0.0, xbar = 0.0;
  int i = 0;
  for (int arm : {0, 1}) {
    for (double x : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const double y = 1.0 + 0.3 * arm + 0.8 * x - 0.3 * arm * x;
      s.records.push_back({x, arm, 1, y, true});
      s.weights.push_back(1.0 + 0.1 * i);
      ++i;
    }
  }
  const auto fit = fit_rmst_regression(s.records, 1.8);
  s.beta = fit.beta;
  s.beta_cov = fit.cov;
  for (std::size_t j = 0; j < s.records.size(); ++j) {
    wsum += s.weights[j];
    xbar += s.weights[j] * s.records[j].x;
  }
  xbar /= wsum;
  const auto g = estimate(s, 1.8, 3);
  CHECK(g.delta == doctest::Approx(0.3 - 0.3 * xbar).epsilon(1e-9));
  CHECK(g.sigma2 == doctest::Approx(0.0).epsilon(1e-12));

  // with a perfect model the augmented residuals vanish, so estimators 3
  // and 5 coincide
  const auto aug = estimate(s, 1.8, 5);
  CHECK(aug.delta == doctest::Approx(g.delta).epsilon(1e-9));
}

TEST_CASE("sampling distribution centers on the truth with sound errors") {
  const double t_star = 1.5;
  const double mu1 = (1.0 - std::exp(-0.6 * t_star)) / 0.6;
  const double mu0 = 1.0 - std::exp(-t_star);
  const double truth = mu1 - mu0;
  const int reps = 400, n = 300;

  std::vector<std::vector<double>> deltas(6), ses(6);
  std::vector<int> covered(6, 0);
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng(replicate_seed(9090, rep));
    AnalysisSet s;
    for (int i = 0; i < n; ++i) {
      const int arm = i % 2;
      const double t = rng.exponential(arm ? 0.6 : 1.0);
      const double c = rng.uniform(0.8, 3.0);
      s.records.push_back(
          {rng.uniform01(), arm, 1, std::min(t, c), t <= c});
    }
    s.weights.assign(n, 1.0);
    const auto fit = fit_rmst_regression(s.records, t_star);
    s.beta = fit.beta;
    s.beta_cov = fit.cov;
    for (const auto& r : estimate_all(s, t_star)) {
      deltas[r.which].push_back(r.delta);
      ses[r.which].push_back(r.se());
      covered[r.which] += std::abs(r.delta - truth) <= 1.96 * r.se();
    }
  }

  for (int which = 1; which <= 5; ++which) {
    CAPTURE(which);
    double mean = 0.0;
    for (double d : deltas[which]) mean += d;
    mean /= reps;
    double sd = 0.0, mse = 0.0;
    for (double d : deltas[which]) sd += (d - mean) * (d - mean);
    sd = std::sqrt(sd / (reps - 1));
    for (double e : ses[which]) mse += e;
    mse /= reps;
    CHECK(std::abs(mean - truth) < 4.0 * sd / std::sqrt(double(reps)));
    CHECK(mse / sd > 0.85);
    CHECK(mse / sd < 1.15);
    CHECK(covered[which] >= 0.90 * reps);
    CHECK(covered[which] <= 0.99 * reps);
  }
}

TEST_CASE("estimate_all preserves the estimator order") {
  auto s = four_point_set();
  const auto all = estimate_all(s, 2.0);
  REQUIRE(all.size() == 5);
  for (int w = 1; w <= 5; ++w) CHECK(all[w - 1].which == w);
}

TEST_CASE("input validation") {
  auto s = four_point_set();
  CHECK_THROWS_AS(estimate(s, 2.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(estimate(s, 2.0, 6), std::invalid_argument);
  CHECK_THROWS_AS(estimate(s, -1.0, 1), std::invalid_argument);

  auto mismatched = four_point_set();
  mismatched.weights.pop_back();
  CHECK_THROWS_AS(estimate(mismatched, 2.0, 1), std::invalid_argument);

  auto negative = four_point_set();
  negative.weights[0] = -0.5;
  CHECK_THROWS_AS(estimate(negative, 2.0, 1), std::invalid_argument);

  auto one_arm = four_point_set();
  for (auto& r : one_arm.records) r.arm = 1;
  CHECK_THROWS_WITH_AS(estimate(one_arm, 2.0, 1), "estimate: empty arm",
                       std::runtime_error);

  AnalysisSet empty;
  CHECK_THROWS_AS(estimate(empty, 2.0, 1), std::invalid_argument);
}
