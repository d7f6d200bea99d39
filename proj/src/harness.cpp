#include "rmstd/harness.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "rmstd/rng.hpp"
#include "rmstd/stats.hpp"

namespace rmstd {

namespace {

using nlohmann::json;

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const char* where) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::invalid_argument(std::string("config: unknown key '") +
                                  item.key() + "' in " + where);
    }
  }
}

const json& require(const json& obj, const char* key, const char* where) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw std::invalid_argument(std::string("config: missing key '") + key +
                                "' in " + where);
  }
  return *it;
}

PiecewiseExpModel parse_model(const json& j, const char* where) {
  if (!j.is_object()) {
    throw std::invalid_argument(std::string("config: ") + where +
                                " must be an object");
  }
  check_keys(j, {"change_points", "rates", "gamma", "form"}, where);
  PiecewiseExpModel m;
  m.change_points =
      require(j, "change_points", where).get<std::vector<double>>();
  m.rates = require(j, "rates", where).get<std::vector<double>>();
  m.gamma = require(j, "gamma", where).get<double>();
  const std::string form = require(j, "form", where).get<std::string>();
  if (form == "x") {
    m.form = CovariateForm::times_x;
  } else if (form == "one_minus_x") {
    m.form = CovariateForm::times_one_minus_x;
  } else {
    throw std::invalid_argument("config: form must be 'x' or 'one_minus_x'");
  }
  m.validate();
  return m;
}

PredictionMode parse_mode(const std::string& s) {
  if (s == "known_locations") return PredictionMode::known_locations;
  if (s == "known_count") return PredictionMode::known_count;
  if (s == "estimated_count") return PredictionMode::estimated_count;
  throw std::invalid_argument(
      "config: prediction must be known_locations, known_count, or estimated_count");
}

const char* mode_name(PredictionMode m) {
  switch (m) {
    case PredictionMode::known_locations:
      return "known_locations";
    case PredictionMode::known_count:
      return "known_count";
    default:
      return "estimated_count";
  }
}

void check_scenario_label(const RunSpec& spec) {
  const auto& d = spec.design;
  switch (spec.scenario) {
    case 0:
      return;
    case 1:
      if (!d.enrichment) return;
      throw std::invalid_argument("config: scenario 1 runs without enrichment");
    case 2:
      if (d.enrichment && d.mode == PredictionMode::known_locations) return;
      throw std::invalid_argument(
          "config: scenario 2 enriches with known change point locations");
    case 3:
      if (d.enrichment && d.mode == PredictionMode::known_count) return;
      throw std::invalid_argument(
          "config: scenario 3 enriches with a known change point count");
    case 4:
      if (d.enrichment && d.mode == PredictionMode::estimated_count) return;
      throw std::invalid_argument(
          "config: scenario 4 enriches with an estimated change point count");
    default:
      throw std::invalid_argument("config: scenario must be 1..4");
  }
}

struct Moments {
  int n = 0;
  double sum = 0.0, sumsq = 0.0;
  void add(double v) {
    ++n;
    sum += v;
    sumsq += v * v;
  }
  double mean() const { return n ? sum / n : 0.0; }
  double sd() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, (sumsq - n * m * m) / (n - 1)));
  }
};

EstMetrics est_metrics(
    const std::vector<ReplicateResult>& reps,
    std::array<std::optional<EstimateResult>, 5> ReplicateResult::*block,
    int which, double truth_value) {
  Moments delta, se;
  int covered = 0;
  for (const auto& r : reps) {
    if (r.failed) continue;
    const auto& e = (r.*block)[which - 1];
    if (!e) continue;
    delta.add(e->delta);
    se.add(e->se());
    const double half = 1.96 * e->se();
    if (e->delta - half <= truth_value && truth_value <= e->delta + half) {
      ++covered;
    }
  }
  EstMetrics m;
  m.n = delta.n;
  m.mean = delta.mean();
  m.bias = delta.mean() - truth_value;
  m.sd = delta.sd();
  m.mean_se = se.mean();
  m.coverage = delta.n ? static_cast<double>(covered) / delta.n : 0.0;
  return m;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

}  // namespace

RunSpec parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  check_keys(j,
             {"scenario", "arms", "support", "accrual", "t_star", "alpha0",
              "alpha_tilde", "estimator", "enrichment", "prediction",
              "cp_alpha", "cp_max", "analytic_target", "replicates", "seed",
              "workers"},
             "top level");

  RunSpec spec;
  const json& arms = require(j, "arms", "top level");
  if (!arms.is_object()) throw std::invalid_argument("config: arms must be an object");
  check_keys(arms, {"control", "experimental"}, "arms");
  spec.design.arms.control = parse_model(require(arms, "control", "arms"), "control");
  spec.design.arms.experimental =
      parse_model(require(arms, "experimental", "arms"), "experimental");

  const json& sup = require(j, "support", "top level");
  check_keys(sup, {"lower", "upper"}, "support");
  spec.design.support.lower = require(sup, "lower", "support").get<double>();
  spec.design.support.upper = require(sup, "upper", "support").get<double>();

  const json& acc = require(j, "accrual", "top level");
  check_keys(acc, {"n1", "n2", "t1", "t2", "t3", "ltfu_rate"}, "accrual");
  spec.design.plan.n1 = require(acc, "n1", "accrual").get<int>();
  spec.design.plan.n2 = require(acc, "n2", "accrual").get<int>();
  spec.design.plan.t1 = require(acc, "t1", "accrual").get<double>();
  spec.design.plan.t2 = require(acc, "t2", "accrual").get<double>();
  spec.design.plan.t3 = require(acc, "t3", "accrual").get<double>();
  spec.design.plan.ltfu_rate = require(acc, "ltfu_rate", "accrual").get<double>();

  spec.design.t_star = require(j, "t_star", "top level").get<double>();
  spec.design.alpha0 = require(j, "alpha0", "top level").get<double>();
  spec.design.alpha_tilde = require(j, "alpha_tilde", "top level").get<double>();
  spec.design.estimator = require(j, "estimator", "top level").get<int>();
  spec.design.enrichment = require(j, "enrichment", "top level").get<bool>();
  spec.design.mode =
      parse_mode(require(j, "prediction", "top level").get<std::string>());
  if (j.contains("cp_alpha")) spec.design.cp_alpha = j["cp_alpha"].get<double>();
  if (j.contains("cp_max")) spec.design.cp_max = j["cp_max"].get<int>();
  if (j.contains("analytic_target")) {
    spec.design.analytic_target = j["analytic_target"].get<bool>();
  }
  if (j.contains("scenario")) spec.scenario = j["scenario"].get<int>();
  if (j.contains("replicates")) spec.replicates = j["replicates"].get<int>();
  if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("workers")) spec.workers = j["workers"].get<int>();

  if (spec.replicates < 1) throw std::invalid_argument("config: replicates must be positive");
  if (spec.workers < 1) throw std::invalid_argument("config: workers must be positive");
  spec.design.validate();
  check_scenario_label(spec);
  return spec;
}

RunSpec load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const RunSpec& spec) {
  const auto model_json = [](const PiecewiseExpModel& m) {
    return json{{"change_points", m.change_points},
                {"rates", m.rates},
                {"gamma", m.gamma},
                {"form", m.form == CovariateForm::times_x ? "x" : "one_minus_x"}};
  };
  json j{
      {"arms",
       {{"control", model_json(spec.design.arms.control)},
        {"experimental", model_json(spec.design.arms.experimental)}}},
      {"support",
       {{"lower", spec.design.support.lower}, {"upper", spec.design.support.upper}}},
      {"accrual",
       {{"n1", spec.design.plan.n1},
        {"n2", spec.design.plan.n2},
        {"t1", spec.design.plan.t1},
        {"t2", spec.design.plan.t2},
        {"t3", spec.design.plan.t3},
        {"ltfu_rate", spec.design.plan.ltfu_rate}}},
      {"t_star", spec.design.t_star},
      {"alpha0", spec.design.alpha0},
      {"alpha_tilde", spec.design.alpha_tilde},
      {"estimator", spec.design.estimator},
      {"enrichment", spec.design.enrichment},
      {"prediction", mode_name(spec.design.mode)},
      {"cp_alpha", spec.design.cp_alpha},
      {"cp_max", spec.design.cp_max},
      {"analytic_target", spec.design.analytic_target},
      {"replicates", spec.replicates},
      {"seed", spec.seed},
      {"workers", spec.workers},
  };
  if (spec.scenario != 0) j["scenario"] = spec.scenario;
  return j.dump(2);
}

ScenarioMetrics summarize(const RunSpec& spec, const DesignTruth& truth,
                          const std::vector<ReplicateResult>& reps) {
  ScenarioMetrics m;
  m.scenario = spec.scenario;
  m.replicates = static_cast<int>(reps.size());
  m.truth = truth;

  const double q0 = normal_quantile(1.0 - spec.design.alpha0);
  const double q = normal_quantile(1.0 - spec.design.alpha_tilde);
  const double true_cut = truth.cutpoint.value_or(0.0);

  Moments c0, ct, b3, b3se, npos, nneg;
  std::array<int, 5> rejected{};
  std::array<std::array<int, 4>, 2> kcount{};
  int valid = 0, inter = 0;
  for (const auto& r : reps) {
    if (r.failed) {
      ++m.failed;
      continue;
    }
    ++valid;
    if (r.c0) c0.add(*r.c0);
    if (r.enriched) ++m.enriched;
    if (r.no_usable_cutpoint) ++m.no_usable_cutpoint;
    if (r.calibration_fallback) ++m.calibration_fallbacks;
    if (r.c_final) ct.add(*r.c_final);
    b3.add(r.beta3);
    b3se.add(r.se_beta3);
    npos.add(r.n_positive);
    nneg.add(r.true_negatives);
    if (r.z_interaction > q0) ++inter;
    for (int e = 1; e <= 5; ++e) {
      if (decide(r, e, q0, q).rejected) ++rejected[e - 1];
    }
    for (int arm = 0; arm < 2; ++arm) {
      ++kcount[arm][std::min(r.detected_k[arm], 3)];
    }
  }

  m.c0_defined = c0.n;
  m.c0_mean = c0.mean();
  m.c0_bias = truth.cutpoint ? c0.mean() - true_cut : 0.0;
  m.c0_sd = c0.sd();
  m.ct_defined = ct.n;
  m.ct_mean = ct.mean();
  m.ct_bias = truth.cutpoint ? ct.mean() - true_cut : 0.0;
  m.ct_sd = ct.sd();
  m.beta3_mean = b3.mean();
  m.beta3_sd = b3.sd();
  m.beta3_mean_se = b3se.mean();
  m.interaction_rate = valid ? static_cast<double>(inter) / valid : 0.0;
  m.mean_n_positive = npos.mean();
  m.mean_true_negatives = nneg.mean();
  for (int e = 0; e < 5; ++e) {
    m.reject_rate[e] = valid ? static_cast<double>(rejected[e]) / valid : 0.0;
    m.at_estimated[e] = est_metrics(reps, &ReplicateResult::at_estimated,
                                    e + 1, truth.delta_pos);
    m.at_true[e] =
        est_metrics(reps, &ReplicateResult::at_true, e + 1, truth.delta_pos);
    m.overall[e] =
        est_metrics(reps, &ReplicateResult::overall, e + 1, truth.delta_overall);
  }
  for (int arm = 0; arm < 2; ++arm) {
    for (int k = 0; k < 4; ++k) {
      m.k_share[arm][k] = valid ? static_cast<double>(kcount[arm][k]) / valid : 0.0;
    }
  }
  return m;
}

void write_scenario_outputs(const std::string& outdir, const RunSpec& spec,
                            const ScenarioMetrics& m) {
  std::filesystem::create_directories(outdir);
  const std::string tag = std::to_string(m.scenario);

  {
    auto out = open_out(outdir + "/table2.csv");
    out << "scenario,prediction,quantity,n_defined,mean,bias,sd\n";
    out << tag << ',' << mode_name(spec.design.mode) << ",c0," << m.c0_defined
        << ',' << fmt(m.c0_mean) << ',' << fmt(m.c0_bias) << ',' << fmt(m.c0_sd)
        << '\n';
    out << tag << ',' << mode_name(spec.design.mode) << ",ct," << m.ct_defined
        << ',' << fmt(m.ct_mean) << ',' << fmt(m.ct_bias) << ',' << fmt(m.ct_sd)
        << '\n';
  }
  {
    auto out = open_out(outdir + "/table3.csv");
    out << "scenario,estimator,n,mean,bias,sd,mean_se,coverage\n";
    for (int e = 0; e < 5; ++e) {
      const auto& r = m.at_estimated[e];
      out << tag << ',' << e + 1 << ',' << r.n << ',' << fmt(r.mean) << ','
          << fmt(r.bias) << ',' << fmt(r.sd) << ',' << fmt(r.mean_se) << ','
          << fmt(r.coverage) << '\n';
    }
  }
  {
    auto out = open_out(outdir + "/etable1.csv");
    out << "scenario,estimator,n,mean,bias,sd,mean_se,coverage\n";
    for (int e = 0; e < 5; ++e) {
      const auto& r = m.at_true[e];
      out << tag << ',' << e + 1 << ',' << r.n << ',' << fmt(r.mean) << ','
          << fmt(r.bias) << ',' << fmt(r.sd) << ',' << fmt(r.mean_se) << ','
          << fmt(r.coverage) << '\n';
    }
    out << tag << ",interaction_slope," << m.replicates - m.failed << ','
        << fmt(m.beta3_mean) << ",," << fmt(m.beta3_sd) << ','
        << fmt(m.beta3_mean_se) << ",\n";
  }
  {
    auto out = open_out(outdir + "/table4.csv");
    out << "scenario,estimator,reject_rate,interaction_rate,mean_n_positive,"
           "mean_true_negatives,enriched_rate,no_cutpoint_rate,failed\n";
    const int valid = m.replicates - m.failed;
    for (int e = 0; e < 5; ++e) {
      out << tag << ',' << e + 1 << ',' << fmt(m.reject_rate[e]) << ','
          << fmt(m.interaction_rate) << ',' << fmt(m.mean_n_positive) << ','
          << fmt(m.mean_true_negatives) << ','
          << fmt(valid ? static_cast<double>(m.enriched) / valid : 0.0) << ','
          << fmt(valid ? static_cast<double>(m.no_usable_cutpoint) / valid : 0.0)
          << ',' << m.failed << '\n';
    }
  }
  {
    auto out = open_out(outdir + "/summary.txt");
    out << format_summary(spec, m);
  }
}

std::string format_summary(const RunSpec& spec, const ScenarioMetrics& m) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "scenario " << m.scenario << "  (" << mode_name(spec.design.mode)
     << (spec.design.enrichment ? ", enrichment" : ", all-comer") << ")\n";
  os << "replicates " << m.replicates << ", failed " << m.failed << "\n\n";
  os << "truth: ";
  if (m.truth.cutpoint) {
    os << "cutpoint " << *m.truth.cutpoint;
  } else {
    os << "no positive cutpoint";
  }
  os << ", subgroup effect " << m.truth.delta_pos << ", overall effect "
     << m.truth.delta_overall << "\n\n";

  os << "first-stage cutpoint: defined " << m.c0_defined << ", mean "
     << m.c0_mean << ", bias " << m.c0_bias << ", sd " << m.c0_sd << "\n";
  os << "enriched " << m.enriched << ", unusable predictions "
     << m.no_usable_cutpoint << ", calibration fallbacks "
     << m.calibration_fallbacks << "\n";
  os << "final cutpoint: defined " << m.ct_defined << ", mean " << m.ct_mean
     << ", bias " << m.ct_bias << ", sd " << m.ct_sd << "\n";
  os << "interaction slope: mean " << m.beta3_mean << ", sd " << m.beta3_sd
     << ", mean se " << m.beta3_mean_se << ", gate rate "
     << m.interaction_rate << "\n";
  os << "subgroup size: mean " << m.mean_n_positive
     << "; biomarker-negative enrolled: mean " << m.mean_true_negatives
     << "\n\n";

  const auto block = [&](const char* title,
                         const std::array<EstMetrics, 5>& arr) {
    os << title << "\n";
    os << "  est      n      mean      bias        sd   mean_se  coverage\n";
    for (int e = 0; e < 5; ++e) {
      const auto& r = arr[e];
      os << "   " << e + 1 << std::setw(8) << r.n << std::setw(10) << r.mean
         << std::setw(10) << r.bias << std::setw(10) << r.sd << std::setw(10)
         << r.mean_se << std::setw(10) << r.coverage << "\n";
    }
  };
  block("subgroup effect at the estimated cutpoint", m.at_estimated);
  block("subgroup effect at the true cutpoint", m.at_true);
  block("overall effect", m.overall);

  os << "rejection rate by estimator:";
  for (int e = 0; e < 5; ++e) os << ' ' << m.reject_rate[e];
  os << "\n";
  if (spec.design.mode == PredictionMode::estimated_count &&
      spec.design.enrichment) {
    for (int arm = 0; arm < 2; ++arm) {
      os << "detected change points, arm " << arm << " (0,1,2,3+):";
      for (int k = 0; k < 4; ++k) os << ' ' << m.k_share[arm][k];
      os << "\n";
    }
  }
  return os.str();
}

void write_replicate_log(const std::string& path,
                         const std::vector<ReplicateResult>& reps) {
  auto out = open_out(path);
  out << "replicate,failed,c0,enriched,ct,z_interaction,beta3,n_positive,"
         "true_negatives";
  for (int e = 1; e <= 5; ++e) out << ",delta" << e << ",se" << e;
  out << '\n';
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const auto& r = reps[i];
    out << i << ',' << (r.failed ? 1 : 0) << ','
        << (r.c0 ? fmt(*r.c0) : "NA") << ',' << (r.enriched ? 1 : 0) << ','
        << (r.c_final ? fmt(*r.c_final) : "NA") << ',' << fmt(r.z_interaction)
        << ',' << fmt(r.beta3) << ',' << r.n_positive << ','
        << r.true_negatives;
    for (int e = 0; e < 5; ++e) {
      const auto& est = r.at_estimated[e];
      if (est) {
        out << ',' << fmt(est->delta) << ',' << fmt(est->se());
      } else {
        out << ",NA,NA";
      }
    }
    out << '\n';
  }
}

NullSweep run_null_sweep(const RunSpec& spec,
                         const std::vector<double>& alpha0_grid,
                         const std::vector<double>& alpha_grid) {
  if (alpha0_grid.empty() || alpha_grid.empty()) {
    throw std::invalid_argument("null sweep: empty level grid");
  }
  RunSpec null_spec = spec;
  null_spec.design.arms.experimental = spec.design.arms.control;
  const DesignTruth truth;  // identical arms: no cutpoint, zero effects
  const auto reps = run_replicates(null_spec.design, truth, null_spec.replicates,
                                   null_spec.seed, null_spec.workers);

  NullSweep sweep;
  sweep.alpha0_grid = alpha0_grid;
  sweep.alpha_grid = alpha_grid;
  sweep.reps = static_cast<int>(reps.size());
  for (const auto& r : reps) sweep.valid += r.failed ? 0 : 1;
  if (sweep.valid == 0) throw std::runtime_error("null sweep: all replicates failed");

  for (double a0 : alpha0_grid) {
    const double q0 = normal_quantile(1.0 - a0);
    int gate = 0;
    for (const auto& r : reps) {
      if (!r.failed && r.z_interaction > q0) ++gate;
    }
    sweep.interaction_level.push_back(static_cast<double>(gate) / sweep.valid);
    for (double a : alpha_grid) {
      const double q = normal_quantile(1.0 - a);
      std::array<double, 5> row{};
      for (int e = 1; e <= 5; ++e) {
        int rej = 0;
        for (const auto& r : reps) {
          if (!r.failed && decide(r, e, q0, q).rejected) ++rej;
        }
        row[e - 1] = static_cast<double>(rej) / sweep.valid;
      }
      sweep.fwer.push_back(row);
    }
  }
  return sweep;
}

void write_null_outputs(const std::string& outdir, const RunSpec& spec,
                        const NullSweep& sweep) {
  std::filesystem::create_directories(outdir);
  {
    auto out = open_out(outdir + "/etable2.csv");
    out << "scenario,alpha0,reps,interaction_level\n";
    for (std::size_t i = 0; i < sweep.alpha0_grid.size(); ++i) {
      out << spec.scenario << ',' << fmt(sweep.alpha0_grid[i]) << ','
          << sweep.valid << ',' << fmt(sweep.interaction_level[i]) << '\n';
    }
  }
  {
    auto out = open_out(outdir + "/etable3.csv");
    out << "scenario,estimator,alpha0,alpha,fwer\n";
    for (std::size_t i = 0; i < sweep.alpha0_grid.size(); ++i) {
      for (std::size_t j = 0; j < sweep.alpha_grid.size(); ++j) {
        const auto& row = sweep.fwer[i * sweep.alpha_grid.size() + j];
        for (int e = 0; e < 5; ++e) {
          out << spec.scenario << ',' << e + 1 << ','
              << fmt(sweep.alpha0_grid[i]) << ',' << fmt(sweep.alpha_grid[j])
              << ',' << fmt(row[e]) << '\n';
        }
      }
    }
  }
}

void dump_datasets(const std::string& path, const RunSpec& spec) {
  auto out = open_out(path);
  out << "replicate,stage,arm,x,U,delta\n";
  const DesignTruth truth = derive_truth(spec.design);
  for (int rep = 0; rep < spec.replicates; ++rep) {
    Rng rng(replicate_seed(spec.seed, rep));
    auto stage1 = simulate_stage1(spec.design.arms, spec.design.support,
                                  spec.design.plan, rng);
    // the dump reproduces enrollment only; the second stage enriches at the
    // true cutpoint when enrichment is enabled
    std::optional<double> cut;
    if (spec.design.enrichment && truth.cutpoint &&
        *truth.cutpoint < spec.design.support.upper) {
      cut = truth.cutpoint;
    }
    auto stage2 = simulate_stage2(spec.design.arms, spec.design.support,
                                  spec.design.plan, cut, rng);
    stage1.insert(stage1.end(), stage2.begin(), stage2.end());
    for (const auto& r : observe(stage1, spec.design.plan.t3)) {
      out << rep << ',' << r.stage << ',' << r.arm << ',' << fmt(r.x) << ','
          << fmt(r.time) << ',' << (r.event ? 1 : 0) << '\n';
    }
  }
}

}  // namespace rmstd
