#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rmstd/design.hpp"

namespace rmstd {

struct RunSpec {
  DesignConfig design;
  int scenario = 0;  // 0 means unlabeled
  int replicates = 1000;
  std::uint64_t seed = 1;
  int workers = 1;
};

// strict parse: unknown keys, missing fields, and label/setting mismatches
// are errors
RunSpec parse_config(const std::string& text);
RunSpec load_config_file(const std::string& path);
std::string serialize_config(const RunSpec& spec);

struct EstMetrics {
  int n = 0;
  double mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double mean_se = 0.0;
  double coverage = 0.0;  // nominal 95% Wald interval
};

struct ScenarioMetrics {
  int scenario = 0;
  int replicates = 0;
  int failed = 0;
  DesignTruth truth;

  int c0_defined = 0;
  double c0_mean = 0.0, c0_bias = 0.0, c0_sd = 0.0;
  int enriched = 0;
  int no_usable_cutpoint = 0;
  int calibration_fallbacks = 0;

  int ct_defined = 0;
  double ct_mean = 0.0, ct_bias = 0.0, ct_sd = 0.0;

  double beta3_mean = 0.0, beta3_sd = 0.0, beta3_mean_se = 0.0;
  double interaction_rate = 0.0;

  std::array<EstMetrics, 5> at_estimated{};
  std::array<EstMetrics, 5> at_true{};
  std::array<EstMetrics, 5> overall{};
  std::array<double, 5> reject_rate{};

  double mean_n_positive = 0.0;
  double mean_true_negatives = 0.0;
  std::array<std::array<double, 4>, 2> k_share{};  // detected 0,1,2,3+ per arm
};

ScenarioMetrics summarize(const RunSpec& spec, const DesignTruth& truth,
                          const std::vector<ReplicateResult>& reps);

// table2.csv (cutpoints), table3.csv (subgroup estimation), table4.csv
// (operating characteristics), etable1.csv (true-cutpoint estimation),
// summary.txt
void write_scenario_outputs(const std::string& outdir, const RunSpec& spec,
                            const ScenarioMetrics& m);

// per-replicate log, byte-stable across worker counts
void write_replicate_log(const std::string& path,
                         const std::vector<ReplicateResult>& reps);

std::string format_summary(const RunSpec& spec, const ScenarioMetrics& m);

struct NullSweep {
  std::vector<double> alpha0_grid;
  std::vector<double> alpha_grid;
  int reps = 0;
  int valid = 0;
  std::vector<double> interaction_level;  // indexed by alpha0
  // indexed by [i0 * alpha_grid.size() + j][estimator-1]
  std::vector<std::array<double, 5>> fwer;
};

// forces the experimental arm equal to control, then sweeps both test
// levels over the supplied grids
NullSweep run_null_sweep(const RunSpec& spec,
                         const std::vector<double>& alpha0_grid,
                         const std::vector<double>& alpha_grid);

// etable2.csv (interaction-test level), etable3.csv (familywise error)
void write_null_outputs(const std::string& outdir, const RunSpec& spec,
                        const NullSweep& sweep);

// generation-only dump: replicate,stage,arm,x,U,delta
void dump_datasets(const std::string& path, const RunSpec& spec);

}  // namespace rmstd
