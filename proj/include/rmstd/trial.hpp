#pragma once

#include <optional>
#include <vector>

#include "rmstd/hazard.hpp"
#include "rmstd/rng.hpp"

namespace rmstd {

struct AccrualPlan {
  int n1 = 0;             // per arm, first stage
  int n2 = 0;             // per arm, second stage
  double t1 = 0.0;        // first-stage accrual closes
  double t2 = 0.0;        // second-stage accrual closes
  double t3 = 0.0;        // analysis calendar time
  double ltfu_rate = 0.0; // exponential dropout hazard, 0 disables

  void validate() const;
};

struct Patient {
  double entry = 0.0;
  double x = 0.0;
  int arm = 0;
  int stage = 1;
  double event_time = 0.0;  // latent, measured from entry
  double ltfu_time = 0.0;   // latent dropout, infinity when disabled
};

struct ObservedRecord {
  double x = 0.0;
  int arm = 0;
  int stage = 1;
  double time = 0.0;  // follow-up U
  bool event = false;
};

// first stage: all-comers, entries uniform on (0, t1)
std::vector<Patient> simulate_stage1(const ArmPair& arms,
                                     const BiomarkerSupport& support,
                                     const AccrualPlan& plan, Rng& rng);

// second stage: entries uniform on (t1, t2); biomarker restricted to
// (enrich_cut, upper] when a cutpoint is supplied
std::vector<Patient> simulate_stage2(const ArmPair& arms,
                                     const BiomarkerSupport& support,
                                     const AccrualPlan& plan,
                                     std::optional<double> enrich_cut,
                                     Rng& rng);

// administrative censoring at the analysis time plus latent dropout
std::vector<ObservedRecord> observe(const std::vector<Patient>& patients,
                                    double analysis_time);

}  // namespace rmstd
