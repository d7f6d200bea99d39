#include "rmstd/trial.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rmstd {

void AccrualPlan::validate() const {
  if (n1 < 1 || n2 < 0) {
    throw std::invalid_argument("accrual plan: stage sizes must be positive");
  }
  if (!(t1 > 0.0 && t2 > t1 && t3 >= t2)) {
    throw std::invalid_argument("accrual plan: need 0 < t1 < t2 <= t3");
  }
  if (!(ltfu_rate >= 0.0) || !std::isfinite(ltfu_rate)) {
    throw std::invalid_argument("accrual plan: invalid dropout rate");
  }
}

namespace {

std::vector<Patient> simulate_stage(const ArmPair& arms, int n_per_arm,
                                    double entry_lo, double entry_hi,
                                    double x_lo, double x_hi, int stage,
                                    double ltfu_rate, Rng& rng) {
  std::vector<int> labels(2 * static_cast<std::size_t>(n_per_arm));
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
  rng.shuffle(labels);  // exact 1:1 allocation in random order

  std::vector<Patient> out;
  out.reserve(labels.size());
  for (int arm : labels) {
    Patient p;
    p.arm = arm;
    p.stage = stage;
    p.entry = rng.uniform(entry_lo, entry_hi);
    p.x = rng.uniform(x_lo, x_hi);
    const auto& model = arm == 1 ? arms.experimental : arms.control;
    p.event_time = model.event_time(rng.uniform01(), p.x);
    p.ltfu_time = ltfu_rate > 0.0 ? rng.exponential(ltfu_rate)
                                  : std::numeric_limits<double>::infinity();
    out.push_back(p);
  }
  return out;
}

}  // namespace

std::vector<Patient> simulate_stage1(const ArmPair& arms,
                                     const BiomarkerSupport& support,
                                     const AccrualPlan& plan, Rng& rng) {
  plan.validate();
  return simulate_stage(arms, plan.n1, 0.0, plan.t1, support.lower,
                        support.upper, 1, plan.ltfu_rate, rng);
}

std::vector<Patient> simulate_stage2(const ArmPair& arms,
                                     const BiomarkerSupport& support,
                                     const AccrualPlan& plan,
                                     std::optional<double> enrich_cut,
                                     Rng& rng) {
  plan.validate();
  double x_lo = support.lower;
  if (enrich_cut) {
    if (!(*enrich_cut < support.upper)) {
      throw std::invalid_argument("simulate_stage2: empty enrichment region");
    }
    x_lo = std::max(x_lo, *enrich_cut);
  }
  return simulate_stage(arms, plan.n2, plan.t1, plan.t2, x_lo, support.upper,
                        2, plan.ltfu_rate, rng);
}

std::vector<ObservedRecord> observe(const std::vector<Patient>& patients,
                                    double analysis_time) {
  std::vector<ObservedRecord> out;
  out.reserve(patients.size());
  for (const auto& p : patients) {
    if (p.entry > analysis_time) {
      throw std::invalid_argument("observe: patient enters after analysis time");
    }
    const double admin = analysis_time - p.entry;
    const double censor = std::min(p.ltfu_time, admin);
    ObservedRecord r;
    r.x = p.x;
    r.arm = p.arm;
    r.stage = p.stage;
    r.event = p.event_time <= censor;
    r.time = r.event ? p.event_time : censor;
    out.push_back(r);
  }
  return out;
}

}  // namespace rmstd
