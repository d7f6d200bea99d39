#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "rmstd/hazard.hpp"

using namespace rmstd;

namespace {

const double kLog2 = std::log(2.0);

// hazards of the worked design example
ArmPair example_arms() {
  ArmPair a;
  a.control.rates = {2.5 * kLog2};
  a.experimental.change_points = {1.0 / 6.0};
  a.experimental.rates = {6.0 * kLog2, 2.0 * kLog2};
  a.experimental.gamma = -0.8;
  a.experimental.form = CovariateForm::times_x;
  return a;
}

// hazards of the simulation scenarios
ArmPair sim_arms() {
  ArmPair a;
  a.control.rates = {0.9};
  a.control.form = CovariateForm::times_one_minus_x;
  a.experimental.change_points = {0.25};
  a.experimental.rates = {0.9, 0.45};
  a.experimental.gamma = 0.9;
  a.experimental.form = CovariateForm::times_one_minus_x;
  return a;
}

}  // namespace

TEST_CASE("model validation") {
  PiecewiseExpModel m;
  m.rates = {1.0, 2.0};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);  // missing change point
  m.change_points = {0.5};
  CHECK_NOTHROW(m.validate());
  m.change_points = {0.5, 0.5};
  m.rates = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);  // not increasing
  m.change_points = {0.5};
  m.rates = {1.0, -2.0};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);  // negative rate
}

TEST_CASE("closed-form survival on the example hazards") {
  const auto arms = example_arms();
  // at x = 0 the early hazard integrates to log 2 by the change point
  CHECK(arms.experimental.survival(1.0 / 6.0, 0.0) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(arms.control.survival(1.0, 0.5) ==
        doctest::Approx(std::exp(-2.5 * kLog2)).epsilon(1e-12));
  // multiplier direction: higher x lowers the experimental hazard here
  CHECK(arms.experimental.hazard(1.0, 0.9) <
        arms.experimental.hazard(1.0, 0.1));
  CHECK(arms.experimental.multiplier(0.5) ==
        doctest::Approx(std::exp(-0.4)).epsilon(1e-12));

  const auto sim = sim_arms();
  CHECK(sim.experimental.multiplier(0.3) ==
        doctest::Approx(std::exp(0.9 * 0.7)).epsilon(1e-12));
}

TEST_CASE("restricted mean matches frozen reference values") {
  const auto arms = example_arms();
  CHECK(arms.experimental.rmst(1.5, 0.3) ==
        doctest::Approx(0.5358662488124522).epsilon(1e-12));
  CHECK(arms.control.rmst(1.5, 0.3) ==
        doctest::Approx(0.5341864361704779).epsilon(1e-12));
  const auto sim = sim_arms();
  CHECK(sim.experimental.rmst(2.0, 0.7) ==
        doctest::Approx(1.0295691856708538).epsilon(1e-12));
  CHECK(sim.control.rmst(2.0, 0.7) ==
        doctest::Approx(0.9274456797537927).epsilon(1e-12));
}

TEST_CASE("restricted mean agrees with direct numeric integration") {
  const auto arms = sim_arms();
  const double x = 0.42, t_star = 2.0;
  const int n = 200000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t0 = t_star * i / n, t1 = t_star * (i + 1) / n;
    acc += 0.5 * (arms.experimental.survival(t0, x) +
                  arms.experimental.survival(t1, x)) *
           (t1 - t0);
  }
  CHECK(arms.experimental.rmst(t_star, x) == doctest::Approx(acc).epsilon(1e-8));
}

TEST_CASE("event-time inversion round-trips through survival") {
  const auto arms = example_arms();
  for (double u : {0.999, 0.9, 0.6, 0.5, 0.25, 0.05, 1e-6}) {
    for (double x : {0.01, 0.3, 1.0}) {
      const double t = arms.experimental.event_time(u, x);
      CHECK(arms.experimental.survival(t, x) ==
            doctest::Approx(u).epsilon(1e-10));
    }
  }
  // larger survival fraction maps to an earlier time
  CHECK(arms.experimental.event_time(0.9, 0.5) <
        arms.experimental.event_time(0.2, 0.5));
  CHECK_THROWS_AS(arms.control.event_time(0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(arms.control.event_time(1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(arms.control.rmst(1.0, 1.5), std::invalid_argument);
}

TEST_CASE("optimal cutpoint of the worked example") {
  const auto tc = true_cutpoint(example_arms(), 1.5, {0.01, 1.0});
  REQUIRE(tc.value.has_value());
  CHECK(tc.kind == CutpointKind::crossing);
  CHECK(tc.rising);
  CHECK(*tc.value == doctest::Approx(0.2956313050).epsilon(1e-7));
}

TEST_CASE("optimal cutpoint of the simulation hazards") {
  const auto tc = true_cutpoint(sim_arms(), 2.0, {0.0, 1.0});
  REQUIRE(tc.value.has_value());
  CHECK(tc.rising);
  CHECK(*tc.value == doctest::Approx(0.5188061326).epsilon(1e-7));
}

TEST_CASE("marginal effects of the worked example") {
  const auto arms = example_arms();
  const double c = 0.2956313050;
  CHECK(marginal_rmst_diff(arms, 1.5, c, 1.0) ==
        doctest::Approx(0.1369350514).epsilon(1e-7));
  CHECK(marginal_rmst_diff(arms, 1.5, 0.01, 1.0) ==
        doctest::Approx(0.0818826473).epsilon(1e-7));
}

TEST_CASE("marginal effects of the simulation hazards") {
  const auto arms = sim_arms();
  const double c = 0.5188061326;
  CHECK(marginal_rmst_diff(arms, 2.0, c, 1.0) ==
        doctest::Approx(0.1339245845).epsilon(1e-7));
  CHECK(marginal_rmst_diff(arms, 2.0, 0.0, 1.0) ==
        doctest::Approx(-0.0117671319).epsilon(2e-7));
}

TEST_CASE("quadrature agrees with a riemann sum") {
  const auto arms = sim_arms();
  const int n = 20000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) / n;
    acc += arms.experimental.rmst(2.0, x) - arms.control.rmst(2.0, x);
  }
  acc /= n;
  CHECK(marginal_rmst_diff(arms, 2.0, 0.0, 1.0) ==
        doctest::Approx(acc).epsilon(1e-6));
}

TEST_CASE("degenerate cutpoint shapes are classified") {
  ArmPair flat;
  flat.control.rates = {1.0};
  flat.experimental.rates = {1.0};
  const auto f = true_cutpoint(flat, 1.0, {0.0, 1.0});
  CHECK_FALSE(f.value.has_value());
  CHECK(f.kind == CutpointKind::flat);

  ArmPair better;
  better.control.rates = {1.0};
  better.experimental.rates = {0.5};
  const auto b = true_cutpoint(better, 1.0, {0.0, 1.0});
  CHECK_FALSE(b.value.has_value());
  CHECK(b.kind == CutpointKind::always_positive);

  ArmPair worse;
  worse.control.rates = {0.5};
  worse.experimental.rates = {1.0};
  CHECK(true_cutpoint(worse, 1.0, {0.0, 1.0}).kind ==
        CutpointKind::always_negative);
}

TEST_CASE("a doubly crossing difference is rejected as ambiguous") {
  ArmPair tricky;
  tricky.experimental.change_points = {0.4};
  tricky.experimental.rates = {0.5, 403.0};
  tricky.experimental.gamma = -12.0;
  tricky.experimental.form = CovariateForm::times_x;
  tricky.control.rates = {3.0};
  tricky.control.gamma = -4.0;
  tricky.control.form = CovariateForm::times_x;
  CHECK_THROWS_WITH_AS(true_cutpoint(tricky, 1.5, {0.0, 1.0}),
                       "ambiguous cutpoint", std::runtime_error);
}

TEST_CASE("falling crossings are flagged as not rising") {
  // swap the arms of the simulation truth: the difference falls through zero
  auto arms = sim_arms();
  std::swap(arms.control, arms.experimental);
  const auto tc = true_cutpoint(arms, 2.0, {0.0, 1.0});
  REQUIRE(tc.value.has_value());
  CHECK_FALSE(tc.rising);
  CHECK(*tc.value == doctest::Approx(0.5188061326).epsilon(1e-7));
}
