#include "ipaas/sim/dryer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ipaas::sim {

namespace {
constexpr std::int64_t kHistoryEpochMs = 1'600'000'000'000;
constexpr std::int64_t kHourMs = 3'600'000;
}  // namespace

DryerSim::DryerSim(PhysicsConstants constants) : c_(constants) {
  if (!(c_.k_dry > 0 && c_.c_gas > 0 && c_.alpha >= 0 && c_.noise_sigma >= 0 && c_.expert_sigma >= 0)) {
    throw SimError("physics constants must be positive");
  }
}

double DryerSim::optimal_temperature(const CycleInputs& in) const {
  return c_.t_opt_base + c_.t_opt_per_drop * in.humidity_drop() + c_.t_opt_per_tonne * in.weight;
}

double DryerSim::drying_time(const CycleInputs& in, double temperature) const {
  return in.weight * in.humidity_drop() / (c_.k_dry * (temperature - c_.t_ambient));
}

double DryerSim::drying_gas(const CycleInputs& in, double temperature) const {
  const double offset = temperature - optimal_temperature(in);
  return c_.c_gas * in.weight * in.humidity_drop() * (1.0 + c_.alpha * offset * offset);
}

SimOutcome DryerSim::ground_truth_outcome(const CycleInputs& in, const Setpoints& sp) const {
  validate(in, false);
  validate(sp);
  const double needed = drying_time(in, sp.temperature);
  const double fraction = needed > 0.0 ? std::min(1.0, sp.extraction_time / needed) : 1.0;
  SimOutcome out;
  out.extraction_time = fraction * needed;
  out.gas_consumed = fraction * drying_gas(in, sp.temperature);
  out.achieved_humidity = in.input_humidity - fraction * in.humidity_drop();
  return out;
}

SimOutcome DryerSim::simulate(const CycleInputs& in, const Setpoints& sp, std::mt19937_64& rng) const {
  SimOutcome out = ground_truth_outcome(in, sp);
  if (c_.noise_sigma == 0.0) return out;
  std::normal_distribution<double> noise(0.0, c_.noise_sigma);
  out.extraction_time = std::max(0.0, out.extraction_time * (1.0 + noise(rng)));
  out.gas_consumed = std::max(0.0, out.gas_consumed * (1.0 + noise(rng)));
  out.achieved_humidity =
      std::clamp(out.achieved_humidity * (1.0 + noise(rng)), 0.0, in.input_humidity);
  return out;
}

double DryerSim::gas_budget(const CycleInputs& in) const { return gas_budget(in, c_.budget_factor); }

double DryerSim::gas_budget(const CycleInputs& in, double factor) const {
  validate(in, false);
  return factor * drying_gas(in, optimal_temperature(in));
}

CycleInputs DryerSim::sample_inputs(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> weight(20.0, 120.0);
  std::uniform_real_distribution<double> input(14.0, 35.0);
  CycleInputs in;
  in.weight = weight(rng);
  in.input_humidity = input(rng);
  // Keep the target strictly below the input humidity.
  const double upper = std::min(15.0, in.input_humidity - 0.1);
  in.target_humidity = std::uniform_real_distribution<double>(11.0, upper)(rng);
  return in;
}

std::vector<store::CycleRecord> DryerSim::gen_historical(std::size_t n, std::uint64_t seed) const {
  if (n == 0) throw SimError("gen_historical: n must be at least 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> expert(0.0, c_.expert_sigma);

  std::vector<store::CycleRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const CycleInputs in = sample_inputs(rng);
    const double temperature = std::clamp(optimal_temperature(in) + expert(rng), 60.0, 120.0);
    // Operators run the dryer until the target humidity is reached.
    Setpoints run{temperature, 2.0 * drying_time(in, temperature), in.input_humidity,
                  in.target_humidity};
    const SimOutcome outcome = simulate(in, run, rng);

    store::CycleRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "hist-%04zu", i + 1);
    r.cycle_id = id;
    r.inputs = in;
    r.setpoints = Setpoints{temperature, outcome.extraction_time, in.input_humidity, in.target_humidity};
    r.outcome = outcome;
    r.status = store::CycleStatus::completed;
    r.source = "historical";
    const std::int64_t t0 = kHistoryEpochMs + static_cast<std::int64_t>(i) * 24 * kHourMs;
    r.timestamps["collected"] = t0;
    r.timestamps["completed"] =
        t0 + static_cast<std::int64_t>(std::llround(outcome.extraction_time * kHourMs));
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace ipaas::sim
