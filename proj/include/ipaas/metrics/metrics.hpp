#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace ipaas::metrics {

class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mean Huber loss over the residuals. Per element: a^2/2 when |a| <= delta,
/// otherwise delta * (|a| - delta/2).
double huber(std::span<const double> residuals, double delta);

/// d/da of the per-element Huber loss.
inline double huber_derivative(double residual, double delta) {
  if (residual > delta) return delta;
  if (residual < -delta) return -delta;
  return residual;
}

struct MetricSet {
  double rmse = 0.0;
  double mse = 0.0;
  double mae = 0.0;
  // Empty when the actual values are constant (total sum of squares is zero).
  std::optional<double> r2;
};

MetricSet regression_metrics(std::span<const double> actual, std::span<const double> predicted);

/// Deterministic shuffled split of [0, n) into (train, held-out) index sets.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
Split train_test_split(std::size_t n, double train_fraction, std::uint64_t seed);

}  // namespace ipaas::metrics
