#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ipaas/sim/types.hpp"
#include "ipaas/store/cycle_record.hpp"

namespace ipaas::sim {

/// Closed-form plant used in place of the real dryer and boiler.
///   time  = weight * dh / (k_dry * (T - T_ambient))
///   gas   = c_gas * weight * dh * (1 + alpha * (T - T_opt)^2)
///   T_opt = 75 + 0.5 * dh + 0.05 * weight
struct PhysicsConstants {
  double k_dry = 1.25;         // t*pct / (h*C)
  double t_ambient = 15.0;     // C
  double c_gas = 1.1;          // m^3 / (t*pct)
  double alpha = 0.0004;       // 1 / C^2
  double t_opt_base = 75.0;
  double t_opt_per_drop = 0.5;
  double t_opt_per_tonne = 0.05;
  double noise_sigma = 0.02;   // relative, per outcome field
  double expert_sigma = 3.0;   // C, spread of historical temperature choices
  double budget_factor = 1.10;
};

class DryerSim {
 public:
  explicit DryerSim(PhysicsConstants constants = {});

  const PhysicsConstants& constants() const { return c_; }

  double optimal_temperature(const CycleInputs& in) const;
  /// Hours needed to reach the target humidity at temperature T.
  double drying_time(const CycleInputs& in, double temperature) const;
  /// Gas for a full drying run at temperature T.
  double drying_gas(const CycleInputs& in, double temperature) const;

  /// Noise-free outcome. A run shorter than the drying time stops early:
  /// gas and humidity drop scale with the completed fraction.
  SimOutcome ground_truth_outcome(const CycleInputs& in, const Setpoints& sp) const;

  /// Ground truth times (1 + eps) per field, eps ~ N(0, noise_sigma^2).
  SimOutcome simulate(const CycleInputs& in, const Setpoints& sp, std::mt19937_64& rng) const;

  /// factor * gas at the optimal temperature.
  double gas_budget(const CycleInputs& in) const;
  double gas_budget(const CycleInputs& in, double factor) const;

  CycleInputs sample_inputs(std::mt19937_64& rng) const;

  /// Historical cycles run by experts near the optimal temperature. Records
  /// are complete, tagged source "historical", with synthetic timestamps.
  std::vector<store::CycleRecord> gen_historical(std::size_t n, std::uint64_t seed) const;

 private:
  PhysicsConstants c_;
};

}  // namespace ipaas::sim
