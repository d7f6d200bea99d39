#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rmstd/harness.hpp"
#include "rmstd/stats.hpp"

namespace {

using namespace rmstd;

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) {
      throw std::invalid_argument("bad numeric list entry: " + tok);
    }
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty numeric list");
  return out;
}

// hazards and timing of the worked example; dropout matches 5% loss by the
// analysis horizon
RunSpec example_spec() {
  RunSpec spec;
  spec.design.arms.control.rates = {2.5 * std::log(2.0)};
  spec.design.arms.experimental.change_points = {1.0 / 6.0};
  spec.design.arms.experimental.rates = {6.0 * std::log(2.0), 2.0 * std::log(2.0)};
  spec.design.arms.experimental.gamma = -0.8;
  spec.design.arms.experimental.form = CovariateForm::times_x;
  spec.design.support = {0.01, 1.0};
  spec.design.plan = {100, 100, 0.5, 1.0, 2.5, -std::log(0.95) / 2.0};
  spec.design.t_star = 1.5;
  spec.design.alpha0 = 0.025;
  spec.design.alpha_tilde = 0.023;
  spec.design.estimator = 5;
  spec.design.enrichment = true;
  spec.design.mode = PredictionMode::known_locations;
  spec.seed = 20260814;
  return spec;
}

void apply_overrides(RunSpec& spec, int reps, std::int64_t seed, int workers,
                     const std::string& estimator) {
  if (reps > 0) spec.replicates = reps;
  if (seed >= 0) spec.seed = static_cast<std::uint64_t>(seed);
  if (workers > 0) spec.workers = workers;
  if (!estimator.empty() && estimator != "all") {
    spec.design.estimator = std::stoi(estimator);
    spec.design.validate();
  }
}

void print_sigma(const SigmaEstimates& sig) {
  std::cout << "asymptotic scale (datasets " << sig.datasets << "):\n";
  std::cout << "  interaction slope " << sig.beta3 << " (sd " << sig.sigma_beta3
            << ")\n";
  for (int e = 0; e < 5; ++e) {
    std::cout << "  estimator " << e + 1 << ": subgroup sd "
              << sig.sigma_pos[e] << ", overall sd " << sig.sigma_overall[e]
              << "\n";
  }
}

int cmd_simulate(const std::string& config, int reps, std::int64_t seed,
                 int workers, const std::string& out,
                 const std::string& estimator, bool full,
                 const std::string& dump) {
  RunSpec spec = load_config_file(config);
  apply_overrides(spec, reps, seed, workers, estimator);
  const DesignTruth truth = derive_truth(spec.design);
  const auto results = run_replicates(spec.design, truth, spec.replicates,
                                      spec.seed, spec.workers);
  const auto metrics = summarize(spec, truth, results);
  write_scenario_outputs(out, spec, metrics);
  if (full) write_replicate_log(out + "/replicates.csv", results);
  if (!dump.empty()) dump_datasets(dump, spec);
  std::cout << format_summary(spec, metrics);
  std::cout << "outputs written to " << out << "\n";
  return 0;
}

int cmd_null_sweep(const std::string& config, int reps, std::int64_t seed,
                   int workers, const std::string& out,
                   const std::string& alpha0_csv, const std::string& alpha_csv) {
  RunSpec spec = load_config_file(config);
  apply_overrides(spec, reps, seed, workers, "");
  const auto sweep = run_null_sweep(spec, parse_grid(alpha0_csv),
                                    parse_grid(alpha_csv));
  write_null_outputs(out, spec, sweep);
  std::cout << "null sweep over " << sweep.valid << " usable replicates\n";
  std::cout << "interaction-test level:";
  for (std::size_t i = 0; i < sweep.alpha0_grid.size(); ++i) {
    std::cout << "  " << sweep.alpha0_grid[i] << " -> "
              << sweep.interaction_level[i];
  }
  std::cout << "\noutputs written to " << out << "\n";
  return 0;
}

int cmd_power(const std::string& config, const std::string& n_csv,
              int sigma_reps, int sigma_m, std::int64_t seed, int workers,
              const std::string& out) {
  RunSpec spec = load_config_file(config);
  apply_overrides(spec, -1, seed, workers, "");
  const DesignTruth truth = derive_truth(spec.design);
  const auto sig = monte_carlo_sigma(spec.design, truth, sigma_m, sigma_reps,
                                     splitmix64(spec.seed ^ 0x5167u), spec.workers);
  print_sigma(sig);
  const double q0 = normal_quantile(1.0 - spec.design.alpha0);
  const double q = normal_quantile(1.0 - spec.design.alpha_tilde);

  std::vector<double> ns;
  if (n_csv.empty()) {
    ns.push_back(2.0 * (spec.design.plan.n1 + spec.design.plan.n2));
  } else {
    ns = parse_grid(n_csv);
  }
  std::ofstream csv;
  if (!out.empty()) {
    std::filesystem::create_directories(
        std::filesystem::path(out).parent_path().string().empty()
            ? "."
            : std::filesystem::path(out).parent_path().string());
    csv.open(out);
    csv << "n,estimator,power\n";
  }
  std::cout << "global power (q0 " << q0 << ", q " << q << "):\n";
  std::cout << "      n";
  for (int e = 1; e <= 5; ++e) std::cout << "    est" << e;
  std::cout << "\n";
  for (double n : ns) {
    std::cout << std::setw(7) << n;
    for (int e = 1; e <= 5; ++e) {
      DesignConfig cfg = spec.design;
      cfg.estimator = e;
      const double p = global_power(cfg, truth, sig, q0, q, n);
      std::cout << std::setw(8) << std::setprecision(4) << p;
      if (csv.is_open()) csv << n << ',' << e << ',' << p << '\n';
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_samplesize(const std::string& config, double target, int sigma_reps,
                   int sigma_m, std::int64_t seed, int workers) {
  RunSpec spec = load_config_file(config);
  apply_overrides(spec, -1, seed, workers, "");
  const DesignTruth truth = derive_truth(spec.design);
  const auto sig = monte_carlo_sigma(spec.design, truth, sigma_m, sigma_reps,
                                     splitmix64(spec.seed ^ 0x5167u), spec.workers);
  print_sigma(sig);
  const double q0 = normal_quantile(1.0 - spec.design.alpha0);
  const double q = normal_quantile(1.0 - spec.design.alpha_tilde);
  const int n = sample_size(spec.design, truth, sig, q0, q, target);
  const double pos = expected_positive_count(spec.design, truth,
                                             static_cast<double>(n));
  std::cout << "estimator " << spec.design.estimator << ", target power "
            << target << (spec.design.enrichment ? ", enrichment" : ", all-comer")
            << "\n";
  std::cout << "required total enrollment: " << n << "\n";
  std::cout << "expected subgroup patients: " << pos << "\n";
  std::cout << "expected biomarker-negative patients: " << n - pos << "\n";
  return 0;
}

int cmd_critical_values(const std::string& config, double family_alpha,
                        const std::string& grid_csv, int reps,
                        std::int64_t seed, int workers) {
  RunSpec spec = load_config_file(config);
  apply_overrides(spec, reps, seed, workers, "");
  const auto cv = calibrate_critical_values(
      spec.design, family_alpha, parse_grid(grid_csv), spec.replicates,
      spec.seed, spec.workers);
  std::cout << "familywise target " << family_alpha << " over " << cv.reps
            << " null replicates\n";
  for (const auto& [a, f] : cv.fwer_grid) {
    std::cout << "  alpha " << a << ": familywise error " << f << "\n";
  }
  std::cout << "selected alpha " << cv.alpha_tilde << " (q0 " << cv.q0
            << ", q " << cv.q << ")\n";
  return 0;
}

int cmd_example(const std::string& config, bool power_curve, int sigma_reps,
                int sigma_m, std::int64_t seed, int workers, double target,
                const std::string& out) {
  RunSpec spec = config.empty() ? example_spec() : load_config_file(config);
  apply_overrides(spec, -1, seed, workers, "");
  const DesignTruth truth = derive_truth(spec.design);
  std::cout << std::setprecision(6);
  std::cout << "worked example\n";
  std::cout << "  optimal cutpoint: "
            << (truth.cutpoint ? *truth.cutpoint : 0.0) << "\n";
  std::cout << "  subgroup effect:  " << truth.delta_pos << "\n";
  std::cout << "  overall effect:   " << truth.delta_overall << "\n";
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream f(out + "/example_truth.csv");
    f << "cutpoint,subgroup_effect,overall_effect\n";
    f << (truth.cutpoint ? *truth.cutpoint : 0.0) << ',' << truth.delta_pos
      << ',' << truth.delta_overall << "\n";
  }
  if (!power_curve) return 0;

  const double q0 = normal_quantile(1.0 - spec.design.alpha0);
  const double q = normal_quantile(1.0 - spec.design.alpha_tilde);
  std::ofstream csv;
  if (!out.empty()) {
    csv.open(out + "/example_power.csv");
    csv << "design,estimator,n,power\n";
  }
  const auto sig = monte_carlo_sigma(spec.design, truth, sigma_m, sigma_reps,
                                     splitmix64(spec.seed ^ 2u), spec.workers);
  std::cout << "\n";
  print_sigma(sig);
  for (const bool enrich : {true, false}) {
    DesignConfig cfg = spec.design;
    cfg.enrichment = enrich;
    const char* label = enrich ? "enrichment" : "all-comer";
    std::cout << "\n" << label << " design\n";
    std::cout << "enrollment for power " << target << ":\n";
    for (int e = 1; e <= 5; ++e) {
      cfg.estimator = e;
      const int n = sample_size(cfg, truth, sig, q0, q, target);
      std::cout << "  estimator " << e << ": n = " << n << "\n";
      if (csv.is_open()) {
        for (int grid_n = 200; grid_n <= 1600; grid_n += 50) {
          csv << label << ',' << e << ',' << grid_n << ','
              << global_power(cfg, truth, sig, q0, q, grid_n) << '\n';
        }
      }
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage biomarker-guided enrichment designs with RMST endpoints"};
  app.require_subcommand(1);

  std::string config, out = "out", estimator = "all", dump, n_csv;
  std::string alpha0_csv = "0.01,0.015,0.02,0.025";
  std::string alpha_csv = "0.015,0.02,0.025";
  std::string cv_grid =
      "0.015,0.016,0.017,0.018,0.019,0.02,0.021,0.022,0.023,0.024,0.025";
  int reps = -1, workers = -1, sigma_reps = 2000, sigma_m = 10000;
  std::int64_t seed = -1;
  double target = 0.9, family_alpha = 0.025;
  bool full = false, power_curve = false;

  auto* sim = app.add_subcommand("simulate", "run a scenario and write the table CSVs");
  sim->add_option("config", config, "JSON configuration")->required();
  sim->add_option("--reps", reps, "replicate count override");
  sim->add_option("--seed", seed, "seed override");
  sim->add_option("--workers", workers, "worker thread override");
  sim->add_option("--out", out, "output directory");
  sim->add_option("--estimator", estimator, "headline estimator, 1..5 or all");
  sim->add_flag("--full", full, "also write the per-replicate log");
  sim->add_option("--dump-data", dump, "write generated datasets to this CSV");

  auto* nul = app.add_subcommand("null-sweep", "null-case level and familywise error grids");
  nul->add_option("config", config, "JSON configuration")->required();
  nul->add_option("--reps", reps, "replicate count override");
  nul->add_option("--seed", seed, "seed override");
  nul->add_option("--workers", workers, "worker thread override");
  nul->add_option("--out", out, "output directory");
  nul->add_option("--alpha0-grid", alpha0_csv, "interaction-gate levels");
  nul->add_option("--alpha-grid", alpha_csv, "final-test levels");

  auto* pow = app.add_subcommand("power", "normal-approximation global power");
  pow->add_option("config", config, "JSON configuration")->required();
  pow->add_option("--n", n_csv, "total enrollments to evaluate");
  pow->add_option("--sigma-reps", sigma_reps, "scale-calibration datasets");
  pow->add_option("--sigma-m", sigma_m, "scale-calibration dataset size");
  pow->add_option("--seed", seed, "seed override");
  pow->add_option("--workers", workers, "worker thread override");
  pow->add_option("--out", out, "optional CSV path")->default_val("");

  auto* ss = app.add_subcommand("samplesize", "smallest even enrollment for a target power");
  ss->add_option("config", config, "JSON configuration")->required();
  ss->add_option("--power", target, "target power")->required();
  ss->add_option("--sigma-reps", sigma_reps, "scale-calibration datasets");
  ss->add_option("--sigma-m", sigma_m, "scale-calibration dataset size");
  ss->add_option("--seed", seed, "seed override");
  ss->add_option("--workers", workers, "worker thread override");

  auto* cv = app.add_subcommand("critical-values", "Monte Carlo final-test level calibration");
  cv->add_option("config", config, "JSON configuration")->required();
  cv->add_option("--family-alpha", family_alpha, "familywise error target");
  cv->add_option("--grid", cv_grid, "candidate final-test levels");
  cv->add_option("--reps", reps, "null replicates");
  cv->add_option("--seed", seed, "seed override");
  cv->add_option("--workers", workers, "worker thread override");

  auto* ex = app.add_subcommand("example", "reproduce the worked design example");
  ex->add_option("--config", config, "override the built-in configuration");
  ex->add_flag("--power-curve", power_curve, "also run the power comparison");
  ex->add_option("--sigma-reps", sigma_reps, "scale-calibration datasets");
  ex->add_option("--sigma-m", sigma_m, "scale-calibration dataset size");
  ex->add_option("--target-power", target, "enrollment target power");
  ex->add_option("--seed", seed, "seed override");
  ex->add_option("--workers", workers, "worker thread override");
  ex->add_option("--out", out, "output directory")->default_val("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) {
      return cmd_simulate(config, reps, seed, workers, out, estimator, full, dump);
    }
    if (nul->parsed()) {
      return cmd_null_sweep(config, reps, seed, workers, out, alpha0_csv, alpha_csv);
    }
    if (pow->parsed()) {
      return cmd_power(config, n_csv, sigma_reps, sigma_m, seed, workers, out);
    }
    if (ss->parsed()) {
      return cmd_samplesize(config, target, sigma_reps, sigma_m, seed, workers);
    }
    if (cv->parsed()) {
      return cmd_critical_values(config, family_alpha, cv_grid, reps, seed, workers);
    }
    if (ex->parsed()) {
      return cmd_example(config, power_curve, sigma_reps, sigma_m, seed,
                         workers, target, out);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
