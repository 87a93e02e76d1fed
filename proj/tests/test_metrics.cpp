#include <doctest.h>

#include <cmath>
#include <vector>

#include "ipaas/metrics/adam.hpp"
#include "ipaas/metrics/metrics.hpp"
#include "ipaas/metrics/report.hpp"
#include "support/testkit.hpp"

using namespace ipaas::metrics;

TEST_CASE("huber: zero residual and the two branches") {
  CHECK(huber(std::vector<double>{0.0}, 1.0) == 0.0);
  CHECK(huber(std::vector<double>{0.5}, 1.0) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(huber(std::vector<double>{2.0}, 1.0) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(huber(std::vector<double>{-2.0}, 1.0) == doctest::Approx(1.5).epsilon(1e-15));
  // mean over elements
  CHECK(huber(std::vector<double>{0.5, 2.0}, 1.0) == doctest::Approx((0.125 + 1.5) / 2));
}

TEST_CASE("huber: rejects a non-positive delta") {
  CHECK_THROWS_AS(huber(std::vector<double>{1.0}, 0.0), MetricsError);
  CHECK_THROWS_AS(huber(std::vector<double>{1.0}, -1.0), MetricsError);
}

TEST_CASE("huber: continuous where the branches meet") {
  for (double delta : {1e-3, 0.3, 1.0, 7.5}) {
    const double at = huber(std::vector<double>{delta}, delta);
    const double above = huber(std::vector<double>{std::nextafter(delta, 1e9)}, delta);
    const double below = huber(std::vector<double>{std::nextafter(delta, 0.0)}, delta);
    CHECK(at == doctest::Approx(delta * delta / 2).epsilon(1e-15));
    CHECK(std::abs(above - at) <= 1e-15 * std::max(1.0, delta));
    CHECK(std::abs(below - at) <= 1e-15 * std::max(1.0, delta));
  }
}

TEST_CASE("huber: huge delta is half the mean square") {
  testkit::Gen gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = gen.vector(1 + gen.index(40), -10.0, 10.0);
    double sq = 0.0;
    for (double x : a) sq += x * x;
    const double half_mse = 0.5 * sq / static_cast<double>(a.size());
    CHECK(std::abs(huber(a, 1e6) - half_mse) <= 1e-12 * std::max(1.0, half_mse));
  }
}

TEST_CASE("huber: tiny delta scaled by delta tracks the absolute error") {
  testkit::Gen gen(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a;
    for (std::size_t i = 0, n = 1 + gen.index(30); i < n; ++i) {
      const double mag = gen.uniform(1e-3, 5.0);
      a.push_back(gen.coin() ? mag : -mag);
    }
    double mean_abs = 0.0;
    for (double x : a) mean_abs += std::abs(x);
    mean_abs /= static_cast<double>(a.size());
    CHECK(huber(a, 1e-6) / 1e-6 - (mean_abs - 5e-7) <= 1e-9);
  }
}

TEST_CASE("huber: non-negative, zero only for zero residuals") {
  testkit::Gen gen(13);
  for (int trial = 0; trial < 200; ++trial) {
    auto a = gen.vector(1 + gen.index(10), -3.0, 3.0);
    CHECK(huber(a, gen.uniform(0.01, 3.0)) > 0.0);
  }
  CHECK(huber(std::vector<double>(5, 0.0), 0.5) == 0.0);
}

TEST_CASE("regression_metrics: perfect prediction") {
  const std::vector<double> y{1.0, 4.0, 2.5, -3.0};
  const auto m = regression_metrics(y, y);
  CHECK(m.rmse == 0.0);
  CHECK(m.mae == 0.0);
  REQUIRE(m.r2);
  CHECK(*m.r2 == 1.0);
}

TEST_CASE("regression_metrics: hand-evaluated case") {
  const auto m = regression_metrics(std::vector<double>{1, 2, 3}, std::vector<double>{2, 2, 2});
  CHECK(std::abs(m.mse - 2.0 / 3.0) <= 1e-12);
  CHECK(std::abs(m.mae - 2.0 / 3.0) <= 1e-12);
  CHECK(std::abs(m.rmse - std::sqrt(2.0 / 3.0)) <= 1e-12);
  REQUIRE(m.r2);
  CHECK(std::abs(*m.r2) <= 1e-12);
}

TEST_CASE("regression_metrics: predicting the mean gives zero r2") {
  testkit::Gen gen(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto y = gen.vector(2 + gen.index(30), -5.0, 5.0);
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    const auto m = regression_metrics(y, std::vector<double>(y.size(), mean));
    REQUIRE(m.r2);
    CHECK(std::abs(*m.r2) <= 1e-12);
  }
}

TEST_CASE("regression_metrics: constant actuals leave r2 undefined") {
  const auto m = regression_metrics(std::vector<double>{3, 3, 3}, std::vector<double>{1, 2, 3});
  CHECK_FALSE(m.r2.has_value());
  CHECK(m.mse == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("regression_metrics: length errors") {
  CHECK_THROWS_AS(regression_metrics(std::vector<double>{1, 2}, std::vector<double>{1}), MetricsError);
  CHECK_THROWS_AS(regression_metrics(std::vector<double>{}, std::vector<double>{}), MetricsError);
}

TEST_CASE("regression_metrics: rmse squared equals mse, invariants hold") {
  testkit::Gen gen(22);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + gen.index(50);
    const auto a = gen.vector(n, -100.0, 100.0);
    const auto p = gen.vector(n, -100.0, 100.0);
    const auto m = regression_metrics(a, p);
    CHECK(std::abs(m.rmse * m.rmse - m.mse) <= 1e-12 * std::max(1.0, m.mse));
    CHECK(m.mse >= 0.0);
    CHECK(m.mae >= 0.0);
    if (m.r2) CHECK(*m.r2 <= 1.0);
  }
}

TEST_CASE("adam_step: zero gradient leaves parameters and counts the step") {
  AdamState s(3);
  std::vector<double> p{1.0, -2.0, 0.5};
  const auto before = p;
  adam_step(s, p, std::vector<double>(3, 0.0), AdamConfig{});
  CHECK(p == before);
  CHECK(s.t == 1);
}

TEST_CASE("adam_step: first step on w^2 from w = 1") {
  AdamState s(1);
  std::vector<double> w{1.0};
  adam_step(s, w, std::vector<double>{2.0 * w[0]}, AdamConfig{0.01, 0.9, 0.999, 1e-8});
  // m_hat = 2, v_hat = 4, step = 0.01 * 2 / (2 + 1e-8)
  const double m_hat = s.m[0] / (1 - 0.9);
  const double v_hat = s.v[0] / (1 - 0.999);
  CHECK(std::abs(m_hat - 2.0) <= 1e-12);
  CHECK(std::abs(v_hat - 4.0) <= 1e-12);
  CHECK(std::abs(w[0] - 0.99) <= 1e-8);
}

TEST_CASE("adam_step: 200 steps descend on w^2") {
  AdamState s(1);
  std::vector<double> w{1.0};
  std::vector<double> trace{w[0]};
  for (int i = 0; i < 200; ++i) {
    adam_step(s, w, std::vector<double>{2.0 * w[0]}, AdamConfig{});
    trace.push_back(w[0]);
  }
  CHECK(std::abs(w[0]) < 0.5);
  int decreasing = 0;
  for (std::size_t i = 1; i < trace.size(); ++i) decreasing += std::abs(trace[i]) < std::abs(trace[i - 1]);
  CHECK(decreasing == 200);
  CHECK(s.t == 200);
}

TEST_CASE("adam_step: deterministic and validated") {
  testkit::Gen gen(31);
  AdamState a(8), b(8);
  auto pa = gen.vector(8, -1, 1);
  auto pb = pa;
  for (int i = 0; i < 30; ++i) {
    const auto g = gen.vector(8, -3, 3);
    adam_step(a, pa, g, AdamConfig{});
    adam_step(b, pb, g, AdamConfig{});
  }
  CHECK(pa == pb);
  CHECK(a.m == b.m);
  CHECK(a.v == b.v);
  for (double v : a.v) CHECK(v >= 0.0);

  std::vector<double> p(2, 0.0);
  AdamState s(2);
  CHECK_THROWS_AS(adam_step(s, p, std::vector<double>{1.0}, AdamConfig{}), MetricsError);
  CHECK_THROWS_AS(adam_step(s, p, std::vector<double>{1.0, NAN}, AdamConfig{}), MetricsError);
  CHECK_THROWS_AS(adam_step(s, p, std::vector<double>{INFINITY, 0.0}, AdamConfig{}), MetricsError);
}

TEST_CASE("train_test_split: partition, sizes and determinism") {
  for (std::size_t n : {10u, 153u, 1000u}) {
    const auto s = train_test_split(n, 0.7, 5);
    CHECK(s.train.size() == static_cast<std::size_t>(std::llround(0.7 * n)));
    std::vector<int> seen(n, 0);
    for (auto i : s.train) ++seen[i];
    for (auto i : s.test) ++seen[i];
    for (int c : seen) CHECK(c == 1);
    const auto again = train_test_split(n, 0.7, 5);
    CHECK(again.train == s.train);
    CHECK(again.test == s.test);
  }
  CHECK(train_test_split(50, 0.7, 1).train != train_test_split(50, 0.7, 2).train);
}

namespace {
ModelResult result(std::string name, double rmse, double seconds, bool explainable) {
  ModelResult r;
  r.name = std::move(name);
  r.metrics.rmse = rmse;
  r.metrics.mse = rmse * rmse;
  r.metrics.mae = rmse / 2;
  r.metrics.r2 = 0.9;
  r.train_seconds = seconds;
  r.explainable = explainable;
  return r;
}
}  // namespace

TEST_CASE("compare_report: the faster model is flagged and explainability is static") {
  const auto report = compare_report({result("anfis", 0.5, 3.2, true), result("gpr", 0.3, 0.05, false)});
  const auto& speed = report.criterion("model_build_speed");
  CHECK(speed.entries.front().model == "gpr");
  CHECK(speed.entries.front().label == "Very Fast");
  CHECK(speed.entries.front().rank == 1);
  CHECK(speed.entries.back().rank == 2);

  const auto& explain = report.criterion("explainability");
  for (const auto& e : explain.entries) {
    CHECK(e.label == (e.model == "anfis" ? "Auditable" : "Complex"));
  }
  CHECK(report.criterion("model_performance").entries.front().model == "gpr");
  const auto table = report.to_table();
  CHECK(table.find("anfis") != std::string::npos);
  CHECK(table.find("Auditable") != std::string::npos);
  CHECK(table.find("Complex") != std::string::npos);
}

TEST_CASE("compare_report: ties share a rank in name order") {
  const auto report = compare_report({result("zeta", 0.4, 1.0, false), result("alpha", 0.4, 1.0, false)});
  const auto& perf = report.criterion("model_performance");
  REQUIRE(perf.entries.size() == 2);
  CHECK(perf.entries[0].model == "alpha");
  CHECK(perf.entries[1].model == "zeta");
  CHECK(perf.entries[0].rank == perf.entries[1].rank);
}

TEST_CASE("compare_report: needs two models; file form round-trips") {
  CHECK_THROWS_AS(compare_report({result("one", 1, 1, true)}), MetricsError);
  auto a = result("anfis", 0.123456789, 2.5, true);
  auto b = result("gpr", 0.1, 0.001, false);
  b.metrics.r2.reset();
  const auto report = compare_report({a, b});
  const auto text = report.to_json().dump();
  const auto back = ComparisonReport::from_json(nlohmann::json::parse(text));
  CHECK(back.to_json().dump() == text);
  CHECK_FALSE(back.models[1].metrics.r2.has_value());
  CHECK(back.models[0].metrics.rmse == a.metrics.rmse);
}

TEST_CASE("round_seconds keeps three decimals") {
  CHECK(round_seconds(12.70049) == doctest::Approx(12.700));
  CHECK(round_seconds(0.5306) == doctest::Approx(0.531).epsilon(1e-12));
}
