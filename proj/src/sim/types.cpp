#include "ipaas/sim/types.hpp"

#include <cmath>

namespace ipaas::sim {

void validate(const CycleInputs& in, bool strict_drop) {
  auto in_range = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; };
  if (!in_range(in.weight, 20.0, 120.0)) throw SimError("weight must lie in [20, 120] t");
  if (!in_range(in.input_humidity, 14.0, 35.0)) throw SimError("input humidity must lie in [14, 35] %");
  if (!in_range(in.target_humidity, 11.0, 15.0)) throw SimError("target humidity must lie in [11, 15] %");
  if (strict_drop ? in.target_humidity >= in.input_humidity : in.target_humidity > in.input_humidity) {
    throw SimError("target humidity must be below input humidity");
  }
}

void validate(const Setpoints& sp) {
  if (!std::isfinite(sp.temperature) || sp.temperature < 60.0 || sp.temperature > 120.0) {
    throw SimError("temperature setpoint must lie in [60, 120] C");
  }
  if (!std::isfinite(sp.extraction_time) || sp.extraction_time <= 0.0) {
    throw SimError("extraction time setpoint must be positive");
  }
}

}  // namespace ipaas::sim
