#include "ipaas/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ipaas::metrics {

double huber(std::span<const double> residuals, double delta) {
  if (!(delta > 0.0)) throw MetricsError("huber: delta must be positive");
  if (residuals.empty()) return 0.0;
  double total = 0.0;
  for (double a : residuals) {
    const double abs_a = std::abs(a);
    total += abs_a <= delta ? 0.5 * a * a : delta * (abs_a - 0.5 * delta);
  }
  return total / static_cast<double>(residuals.size());
}

MetricSet regression_metrics(std::span<const double> actual, std::span<const double> predicted) {
  if (actual.size() != predicted.size()) {
    throw MetricsError("regression_metrics: length mismatch (" + std::to_string(actual.size()) +
                       " vs " + std::to_string(predicted.size()) + ")");
  }
  if (actual.empty()) throw MetricsError("regression_metrics: empty input");

  const auto n = static_cast<double>(actual.size());
  const double mean = std::accumulate(actual.begin(), actual.end(), 0.0) / n;

  double ss_res = 0.0;
  double ss_tot = 0.0;
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double r = actual[i] - predicted[i];
    ss_res += r * r;
    abs_sum += std::abs(r);
    const double d = actual[i] - mean;
    ss_tot += d * d;
  }

  MetricSet m;
  m.mse = ss_res / n;
  m.rmse = std::sqrt(m.mse);
  m.mae = abs_sum / n;
  if (ss_tot > 0.0) m.r2 = 1.0 - ss_res / ss_tot;
  return m;
}

Split train_test_split(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw MetricsError("train_test_split: fraction must lie in (0, 1)");
  }
  if (n < 2) throw MetricsError("train_test_split: need at least two rows");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  Split split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace ipaas::metrics
