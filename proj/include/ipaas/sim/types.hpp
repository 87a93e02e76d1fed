#pragma once

#include <stdexcept>

namespace ipaas::sim {

class SimError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Measured at cycle start. weight in tonnes, humidities in percent.
struct CycleInputs {
  double weight = 0.0;           // [20, 120]
  double input_humidity = 0.0;   // [14, 35]
  double target_humidity = 0.0;  // [11, 15], below input_humidity

  double humidity_drop() const { return input_humidity - target_humidity; }
  bool operator==(const CycleInputs&) const = default;
};

struct Setpoints {
  double temperature = 0.0;      // degrees C, [60, 120]
  double extraction_time = 0.0;  // hours, > 0
  double humidity_level = 0.0;   // echo of input_humidity
  double humidity_goal = 0.0;    // echo of target_humidity
  bool operator==(const Setpoints&) const = default;
};

struct SimOutcome {
  double extraction_time = 0.0;  // hours
  double gas_consumed = 0.0;     // m^3
  double achieved_humidity = 0.0;
  bool operator==(const SimOutcome&) const = default;
};

/// Range checks. With `strict_drop`, target_humidity must be below
/// input_humidity; otherwise equality (nothing to dry) is accepted.
void validate(const CycleInputs& inputs, bool strict_drop = true);
void validate(const Setpoints& setpoints);

}  // namespace ipaas::sim
