#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "ipaas/sim/dryer.hpp"
#include "ipaas/store/cycle_store.hpp"
#include "support/testkit.hpp"

using namespace ipaas;
using sim::CycleInputs;
using sim::DryerSim;
using sim::Setpoints;
using store::CycleRecord;
using store::CycleStatus;
using store::CycleStore;

namespace {

const CycleInputs kExample{60.0, 25.0, 13.0};

Setpoints run_at(const CycleInputs& in, double t, double hours) {
  return {t, hours, in.input_humidity, in.target_humidity};
}

CycleInputs random_inputs(testkit::Gen& gen) {
  CycleInputs in;
  in.weight = gen.uniform(20, 120);
  in.input_humidity = gen.uniform(14, 35);
  in.target_humidity = gen.uniform(11, std::min(15.0, in.input_humidity - 0.01));
  return in;
}

CycleRecord collected(const std::string& id, std::int64_t ts = 1000) {
  CycleRecord r;
  r.cycle_id = id;
  r.inputs = kExample;
  r.source = "test";
  r.timestamps["collected"] = ts;
  return r;
}

CycleRecord completed(const std::string& id, std::int64_t ts) {
  CycleRecord r = collected(id, ts);
  r.setpoints = run_at(kExample, 90.0, 8.0);
  r.outcome = sim::SimOutcome{7.5, 800.0, 13.0};
  r.prediction = store::Prediction{7.4, 90.0, 810.0, "gpr", 1};
  r.status = CycleStatus::completed;
  r.timestamps["completed"] = ts + 10;
  return r;
}

}  // namespace

TEST_CASE("ground truth: worked example") {
  const DryerSim sim;
  CHECK(sim.optimal_temperature(kExample) == doctest::Approx(84.0).epsilon(1e-15));
  CHECK(std::abs(sim.drying_time(kExample, 95.0) - 7.2) <= 1e-12);
  const auto out = sim.ground_truth_outcome(kExample, run_at(kExample, 95.0, 10.0));
  CHECK(std::abs(out.extraction_time - 7.2) <= 1e-12);
  CHECK(std::abs(out.gas_consumed - 792.0 * 1.0484) <= 1e-9);
  CHECK(std::abs(out.gas_consumed - 830.33) < 0.005);
  CHECK(out.achieved_humidity == 13.0);
}

TEST_CASE("ground truth: nothing to dry, quadratic minimum, early stop") {
  const DryerSim sim;
  const CycleInputs flat{50.0, 14.5, 14.5};
  const auto none = sim.ground_truth_outcome(flat, run_at(flat, 80.0, 1.0));
  CHECK(none.extraction_time == 0.0);
  CHECK(none.gas_consumed == 0.0);
  CHECK(sim.gas_budget(flat) == 0.0);

  const double t_opt = sim.optimal_temperature(kExample);
  const auto best = sim.ground_truth_outcome(kExample, run_at(kExample, t_opt, 100.0));
  CHECK(best.gas_consumed == doctest::Approx(1.1 * 60 * 12).epsilon(1e-14));

  const auto half = sim.ground_truth_outcome(kExample, run_at(kExample, 95.0, 3.6));
  CHECK(half.extraction_time == doctest::Approx(3.6));
  CHECK(half.achieved_humidity == doctest::Approx(19.0));
  CHECK(half.gas_consumed == doctest::Approx(830.3328 / 2).epsilon(1e-9));
}

TEST_CASE("ground truth: monotone in temperature") {
  const DryerSim sim;
  testkit::Gen gen(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto in = random_inputs(gen);
    const double t_opt = sim.optimal_temperature(in);
    CHECK(t_opt >= 60.0);
    CHECK(t_opt <= 120.0);
    const double a = gen.uniform(60, 119), b = gen.uniform(a + 0.01, 120);
    CHECK(sim.drying_time(in, b) < sim.drying_time(in, a));
    const double d1 = gen.uniform(0, 20), d2 = gen.uniform(d1 + 0.01, 30);
    CHECK(sim.drying_gas(in, t_opt + d2) > sim.drying_gas(in, t_opt + d1));
    CHECK(sim.drying_gas(in, t_opt - d2) > sim.drying_gas(in, t_opt - d1));
  }
}

TEST_CASE("gas budget: worked example and headroom") {
  const DryerSim sim;
  CHECK(std::abs(sim.gas_budget(kExample) - 871.2) <= 1e-9);
  testkit::Gen gen(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto in = random_inputs(gen);
    const double opt = sim.drying_gas(in, sim.optimal_temperature(in));
    CHECK(sim.gas_budget(in) >= opt);
  }
}

TEST_CASE("simulate: seeded, unbiased, and exact without noise") {
  const DryerSim sim;
  const auto sp = run_at(kExample, 95.0, 10.0);
  std::mt19937_64 a(7), b(7);
  CHECK(sim.simulate(kExample, sp, a) == sim.simulate(kExample, sp, b));

  std::mt19937_64 rng(123);
  double sum = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto out = sim.simulate(kExample, sp, rng);
    CHECK(out.achieved_humidity <= kExample.input_humidity);
    CHECK(out.gas_consumed >= 0.0);
    sum += out.gas_consumed;
  }
  const double truth = sim.ground_truth_outcome(kExample, sp).gas_consumed;
  CHECK(std::abs(sum / 1000 - truth) <= 0.005 * truth);

  sim::PhysicsConstants quiet;
  quiet.noise_sigma = 0.0;
  const DryerSim exact(quiet);
  std::mt19937_64 r(1);
  CHECK(exact.simulate(kExample, sp, r) == exact.ground_truth_outcome(kExample, sp));
}

TEST_CASE("validation of inputs and setpoints") {
  const DryerSim sim;
  CHECK_THROWS_AS(sim.ground_truth_outcome({10, 25, 13}, run_at(kExample, 90, 1)), sim::SimError);
  CHECK_THROWS_AS(sim.ground_truth_outcome({60, 40, 13}, run_at(kExample, 90, 1)), sim::SimError);
  CHECK_THROWS_AS(sim.ground_truth_outcome({60, 25, 16}, run_at(kExample, 90, 1)), sim::SimError);
  CHECK_THROWS_AS(sim.ground_truth_outcome(kExample, run_at(kExample, 130, 1)), sim::SimError);
  CHECK_THROWS_AS(sim.ground_truth_outcome(kExample, run_at(kExample, 90, 0)), sim::SimError);
  CHECK_THROWS_AS(sim::validate(CycleInputs{50, 14, 14}), sim::SimError);
  CHECK_NOTHROW(sim::validate(CycleInputs{50, 14, 14}, false));
}

TEST_CASE("gen_historical: 153 reproducible cycles inside the ranges") {
  const DryerSim sim;
  const auto a = sim.gen_historical(153, 7);
  const auto b = sim.gen_historical(153, 7);
  REQUIRE(a.size() == 153);
  std::string text_a, text_b;
  for (const auto& r : a) text_a += store::to_dataset_line(r) + "\n";
  for (const auto& r : b) text_b += store::to_dataset_line(r) + "\n";
  CHECK(text_a == text_b);
  CHECK(text_a != [&] {
    std::string t;
    for (const auto& r : sim.gen_historical(153, 8)) t += store::to_dataset_line(r) + "\n";
    return t;
  }());
  for (const auto& r : a) {
    CHECK(r.source == "historical");
    CHECK(r.status == CycleStatus::completed);
    CHECK_NOTHROW(sim::validate(r.inputs));
    REQUIRE(r.setpoints);
    CHECK(r.setpoints->temperature >= 60.0);
    CHECK(r.setpoints->temperature <= 120.0);
    REQUIRE(r.outcome);
    CHECK(r.outcome->extraction_time > 0.0);
    CHECK(r.outcome->achieved_humidity <= r.inputs.input_humidity);
  }
  const auto one = sim.gen_historical(1, 3);
  REQUIRE(one.size() == 1);
  CHECK(one[0].setpoints.has_value());
  CHECK(one[0].outcome.has_value());
  CHECK(one[0].timestamps.size() == 2);
  CHECK_THROWS_AS(sim.gen_historical(0, 1), sim::SimError);
}

TEST_CASE("dataset line: fixed leading field order and round trip") {
  const auto rec = completed("c-1", 5);
  const auto line = store::to_dataset_line(rec);
  std::vector<std::size_t> positions;
  for (const char* key : {"cycle_id", "weight", "input_humidity", "target_humidity", "temperature",
                          "extraction_time", "gas_consumed", "achieved_humidity", "source"}) {
    positions.push_back(line.find(std::string("\"") + key + "\":"));
  }
  CHECK(std::is_sorted(positions.begin(), positions.end()));
  CHECK(positions.back() != std::string::npos);
  CHECK(store::from_dataset_line(line).same_content(rec));
  CHECK_THROWS_AS(store::from_dataset_line("{oops"), store::RecordError);
  CHECK_THROWS_AS(store::from_dataset_line(R"({"cycle_id":"x"})"), store::RecordError);
}

TEST_CASE("status transitions") {
  using S = CycleStatus;
  CHECK(store::legal_transition(S::collected, S::predicted));
  CHECK(store::legal_transition(S::predicted, S::predicted));
  CHECK(store::legal_transition(S::predicted, S::dispatched));
  CHECK(store::legal_transition(S::predicted, S::manual_review));
  CHECK(store::legal_transition(S::dispatched, S::completed));
  CHECK(store::legal_transition(S::dispatched, S::failed));
  CHECK_FALSE(store::legal_transition(S::completed, S::predicted));
  CHECK_FALSE(store::legal_transition(S::collected, S::completed));
  CHECK_FALSE(store::legal_transition(S::manual_review, S::dispatched));
  for (S s : {S::completed, S::manual_review, S::failed}) CHECK(store::is_terminal(s));
}

TEST_CASE("store: revisions, illegal transitions and conflicts") {
  CycleStore store;
  auto r = collected("c1");
  CHECK(store.append(r) == 1);
  r = *store.get("c1");
  r.status = CycleStatus::predicted;
  r.prediction = store::Prediction{5.0, 85.0, 700.0, "anfis", 0};
  CHECK(store.append(r) == 2);
  CHECK(store.revisions("c1") == std::vector<std::uint64_t>{1, 2});

  auto stale = r;  // still says revision 1
  stale.revision = 1;
  CHECK_THROWS_AS(store.append(stale), store::ConflictError);
  CHECK_THROWS_AS(store.append(collected("c1")), store::ConflictError);

  auto done = completed("c2", 10);
  store.append(done);
  auto back = *store.get("c2");
  back.status = CycleStatus::predicted;
  CHECK_THROWS_AS(store.append(back), store::IllegalTransitionError);

  auto broken = collected("c3");
  broken.status = CycleStatus::completed;  // no outcome
  CHECK_THROWS_AS(store.append(broken), store::StoreError);
  CHECK(store.size() == 2);
}

TEST_CASE("store: queries filter and order by first timestamp") {
  CycleStore store;
  CHECK(store.query().empty());
  store.append(completed("late", 300));
  store.append(collected("early", 100));
  store.append(completed("mid", 200));
  auto hist = completed("hist", 250);
  hist.source = "historical";
  hist.revision = 0;
  store.append(hist);

  std::vector<std::string> ids;
  for (const auto& r : store.query()) ids.push_back(r.cycle_id);
  CHECK(ids == std::vector<std::string>{"early", "mid", "hist", "late"});

  store::QueryFilter f;
  f.status = CycleStatus::completed;
  CHECK(store.query(f).size() == 3);
  f.source = "historical";
  CHECK(store.query(f).size() == 1);

  store::QueryFilter range;
  range.from_ms = 200;
  range.to_ms = 250;
  ids.clear();
  for (const auto& r : store.query(range)) ids.push_back(r.cycle_id);
  CHECK(ids == std::vector<std::string>{"mid", "hist"});
}

TEST_CASE("store: reopening restores records and revisions") {
  testkit::TempDir dir("store");
  const auto path = dir / "cycles.jsonl";
  {
    CycleStore store(path);
    store.append(collected("a"));
    auto r = *store.get("a");
    r.status = CycleStatus::failed;
    store.append(r);
    store.append(completed("b", 50));
  }  // no explicit close or flush beyond append's own
  CycleStore again(path);
  REQUIRE(again.size() == 2);
  CHECK(again.get("a")->status == CycleStatus::failed);
  CHECK(again.revisions("a") == std::vector<std::uint64_t>{1, 2});
  CHECK(again.get("b")->same_content(completed("b", 50)));
  auto r = *again.get("a");
  r.status = CycleStatus::predicted;
  r.prediction = store::Prediction{};
  CHECK_THROWS_AS(again.append(r), store::IllegalTransitionError);
}

TEST_CASE("store: compaction keeps the latest revision of every cycle") {
  testkit::TempDir dir("compact");
  const auto path = dir / "cycles.jsonl";
  std::vector<std::uint64_t> revs_before;
  {
    CycleStore store(path);
    for (int i = 0; i < 40; ++i) {
      auto r = collected("c" + std::to_string(i), i);
      store.append(r);
      r = *store.get(r.cycle_id);
      r.status = CycleStatus::predicted;
      r.prediction = store::Prediction{1.0, 80.0, 100.0, "gpr", 0};
      store.append(r);
      r = *store.get(r.cycle_id);
      r.status = CycleStatus::manual_review;
      store.append(r);
    }
    store.compact();
    revs_before = store.revisions("c7");
  }
  std::size_t lines = 0;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 40);
  CycleStore again(path);
  CHECK(again.size() == 40);
  CHECK(again.get("c7")->revision == 3);
  CHECK(again.get("c7")->status == CycleStatus::manual_review);
  CHECK(revs_before == std::vector<std::uint64_t>{1, 2, 3});
}

TEST_CASE("store: export/import round trip and partial import report") {
  testkit::TempDir dir("export");
  const DryerSim sim;
  CycleStore source;
  for (auto& r : sim.gen_historical(153, 7)) source.append(r);
  CHECK(source.export_to(dir / "all.jsonl") == 153);
  {
    std::ifstream in(dir / "all.jsonl");
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    CHECK(lines == 153);
  }
  CycleStore target;
  const auto report = target.import_from(dir / "all.jsonl");
  CHECK(report.imported == 153);
  CHECK(report.rejects.empty());
  const auto a = source.query(), b = target.query();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].same_content(b[i]));

  // ten lines, the fourth corrupt
  {
    std::ifstream in(dir / "all.jsonl");
    std::ofstream out(dir / "ten.jsonl");
    std::string line;
    for (int i = 0; i < 10 && std::getline(in, line); ++i) out << (i == 3 ? "{\"cycle_id\": 12," : line) << '\n';
  }
  CycleStore partial;
  const auto ten = partial.import_from(dir / "ten.jsonl");
  CHECK(ten.imported == 9);
  REQUIRE(ten.rejects.size() == 1);
  CHECK(ten.rejects[0].first == 4);
  CHECK_FALSE(ten.rejects[0].second.empty());

  // import enforces transitions against what is already stored
  const auto again = partial.import_from(dir / "ten.jsonl");
  CHECK(again.imported == 0);
  CHECK(again.rejects.size() == 10);
}

TEST_CASE("store: wait_for sees a later write") {
  CycleStore store;
  store.append(collected("w"));
  std::thread writer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    auto r = *store.get("w");
    r.status = CycleStatus::failed;
    store.append(r);
  });
  const auto got = store.wait_for(
      "w", [](const CycleRecord& r) { return r.status == CycleStatus::failed; }, std::chrono::milliseconds(2000));
  writer.join();
  REQUIRE(got);
  CHECK(got->revision == 2);
  CHECK_FALSE(store.wait_for("w", [](const CycleRecord&) { return false; }, std::chrono::milliseconds(10)));
}
