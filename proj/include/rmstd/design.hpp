#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rmstd/cutpoint.hpp"
#include "rmstd/estimators.hpp"
#include "rmstd/hazard.hpp"
#include "rmstd/trial.hpp"

namespace rmstd {

// how the first-stage hazard models are segmented
enum class PredictionMode {
  known_locations,  // change points fixed at their configured values
  known_count,      // locations estimated, count taken from the truth
  estimated_count,  // sequential likelihood-ratio scan
};

struct DesignConfig {
  ArmPair arms;
  BiomarkerSupport support;
  AccrualPlan plan;
  double t_star = 0.0;
  double alpha0 = 0.025;       // one-sided level of the interaction gate
  double alpha_tilde = 0.025;  // one-sided level of the final test
  int estimator = 5;
  bool enrichment = true;
  PredictionMode mode = PredictionMode::estimated_count;
  double cp_alpha = 0.05;  // first-level scan alpha, halved per level
  int cp_max = 3;
  bool analytic_target = false;  // calibrate to uniform moments instead of
                                 // the first-stage sample

  void validate() const;
};

struct DesignTruth {
  std::optional<double> cutpoint;
  bool rising = false;
  double delta_pos = 0.0;
  double delta_overall = 0.0;
};

// true cutpoint and marginal effects implied by the configured hazards
DesignTruth derive_truth(const DesignConfig& cfg);

struct ReplicateResult {
  bool failed = false;
  std::string failure;

  std::optional<double> c0;  // first-stage predicted cutpoint
  bool enriched = false;
  bool no_usable_cutpoint = false;  // prediction failed, fell, or was ambiguous
  std::array<int, 2> detected_k = {0, 0};

  double z_interaction = 0.0;
  double beta3 = 0.0;
  double se_beta3 = 0.0;
  std::optional<double> c_final;  // regression cutpoint at the final analysis
  int n_positive = 0;
  int true_negatives = 0;  // enrolled patients below the true cutpoint
  bool calibration_fallback = false;
  bool calibration_fallback_true = false;

  std::array<std::optional<EstimateResult>, 5> at_estimated;
  std::array<std::optional<EstimateResult>, 5> at_true;
  std::array<std::optional<EstimateResult>, 5> overall;
};

ReplicateResult run_replicate(const DesignConfig& cfg, const DesignTruth& truth,
                              std::uint64_t seed);

std::vector<ReplicateResult> run_replicates(const DesignConfig& cfg,
                                            const DesignTruth& truth, int reps,
                                            std::uint64_t base_seed,
                                            int workers);

struct TrialDecision {
  bool interaction_significant = false;
  int hypothesis = 2;  // 1 subgroup, 2 overall
  double z = 0.0;
  bool rejected = false;
};

// applies the two-step testing rule to a finished replicate
TrialDecision decide(const ReplicateResult& rep, int estimator, double q0,
                     double q);

struct CriticalValues {
  double q0 = 0.0;
  double q = 0.0;
  double alpha_tilde = 0.0;
  int reps = 0;
  std::vector<std::pair<double, double>> fwer_grid;  // alpha -> empirical FWER
};

// Monte Carlo search for the largest final-test alpha holding the familywise
// error at family_alpha under the global null
CriticalValues calibrate_critical_values(const DesignConfig& cfg,
                                         double family_alpha,
                                         const std::vector<double>& alpha_grid,
                                         int reps, std::uint64_t seed,
                                         int workers);

struct SigmaEstimates {
  double beta3 = 0.0;        // large-sample interaction slope
  double sigma_beta3 = 0.0;  // sqrt(n)-scale deviation of the slope
  std::array<double, 5> sigma_pos{};      // subgroup estimators, sqrt(n+) scale
  std::array<double, 5> sigma_overall{};  // overall estimators, sqrt(n) scale
  int datasets = 0;
};

// large-dataset Monte Carlo for the asymptotic standard deviations; datasets
// are drawn from the full support (the enrichment flag only changes how
// global_power converts totals into subgroup counts) and the subgroup is cut
// at the true cutpoint with unit weights
SigmaEstimates monte_carlo_sigma(const DesignConfig& cfg,
                                 const DesignTruth& truth, int dataset_size,
                                 int datasets, std::uint64_t seed, int workers);

// expected number of subgroup patients when n_total are enrolled
double expected_positive_count(const DesignConfig& cfg,
                               const DesignTruth& truth, double n_total);

// probability of rejecting either null, by the normal approximation
double global_power(const DesignConfig& cfg, const DesignTruth& truth,
                    const SigmaEstimates& sig, double q0, double q,
                    double n_total);

// smallest even total enrollment reaching the target power
int sample_size(const DesignConfig& cfg, const DesignTruth& truth,
                const SigmaEstimates& sig, double q0, double q,
                double target_power);

}  // namespace rmstd
