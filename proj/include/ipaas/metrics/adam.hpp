#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ipaas::metrics {

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(std::size_t dim) : m(dim, 0.0), v(dim, 0.0) {}
};

/// One bias-corrected Adam update applied in place. A parameter whose gradient
/// has always been zero never moves.
/// Throws MetricsError on dimension mismatch or a non-finite gradient.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               const AdamConfig& config);

}  // namespace ipaas::metrics
