#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "ipaas/cli/cli.hpp"
#include "ipaas/platform/canonical.hpp"
#include "ipaas/platform/drying_loop.hpp"
#include "support/testkit.hpp"

using namespace ipaas;
namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in);
  return nlohmann::json::parse(in);
}

struct Invocation {
  int code;
  std::string out;
  std::string err;
};

Invocation invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("shipped config files match the built-in definitions") {
  const fs::path root = IPAAS_SOURCE_DIR;
  CHECK(read_json(root / "config/drying-process.json") == platform::canonical_process_json());
  CHECK(read_json(root / "config/routes.json") == platform::canonical_routes_json());
  CHECK(process::definition_from_json(read_json(root / "config/drying-process.json")).id ==
        platform::canonical_process().id);
}

TEST_CASE("datasets keep completed cycles and pick the target's features") {
  auto records = sim::DryerSim().gen_historical(30, 11);
  records[0].status = store::CycleStatus::failed;
  records[0].outcome.reset();
  const auto time = platform::build_dataset(records, platform::kTimeTarget);
  CHECK(time.rows() == 29);
  CHECK(time.X.cols() == 3);
  CHECK(time.y(0) == records[1].outcome->extraction_time);
  const auto gas = platform::build_dataset(records, platform::kGasTarget);
  CHECK(gas.X.cols() == 4);
  CHECK(gas.X(0, 3) == records[1].setpoints->temperature);
  const auto temp = platform::build_dataset(records, platform::kTemperatureTarget);
  CHECK(temp.y(0) == records[1].setpoints->temperature);
  CHECK_THROWS_AS(platform::build_dataset(records, "colour"), models::ModelError);
  CHECK_THROWS_AS(platform::build_dataset(std::span(records.begin(), 1), platform::kTimeTarget), models::ModelError);
}

TEST_CASE("model suites train, persist and reload") {
  const auto records = sim::DryerSim().gen_historical(60, 12);
  platform::ModelOptions opts;
  opts.n_rules = 4;
  opts.anfis.epochs = 100;
  testkit::TempDir dir("suite");
  for (const std::string kind : {"anfis", "gpr"}) {
    const auto suite = platform::train_suite(kind, records, opts);
    CHECK(suite.kind == kind);
    platform::save_suite(suite, dir.path());
    CHECK(fs::exists(platform::model_path(dir.path(), kind, platform::kGasTarget)));
    const auto back = platform::load_suite(dir.path(), kind);
    const auto row = platform::feature_row(records[3].inputs, 80.0);
    CHECK(back.gas->predict(row).value == doctest::Approx(suite.gas->predict(row).value).epsilon(1e-12));
  }
  CHECK_THROWS_AS(platform::load_suite(dir.path() / "nowhere", "gpr"), models::ModelError);
}

TEST_CASE("closed loop: cycles reach a terminal state and respect the gas budget") {
  const auto history = sim::DryerSim().gen_historical(153, 7);
  const auto suite = platform::train_suite("gpr", history, {});
  store::CycleStore store;
  platform::DryingLoop loop(store, suite);
  const auto results = loop.run(6);
  REQUIRE(results.size() == 6);
  std::set<std::string> ids;
  for (const auto& r : results) {
    ids.insert(r.cycle_id);
    CHECK((r.status == "completed" || r.status == "manual-review"));
    CHECK(r.retries <= 3);
    const auto rec = store.get(r.cycle_id);
    REQUIRE(rec);
    CHECK(store::is_terminal(rec->status));
    CHECK(rec->source == platform::kClosedLoopSource);
  }
  CHECK(ids.size() == 6);
  for (const auto& cmd : loop.boiler_commands()) CHECK(cmd.predicted_gas <= cmd.gas_budget);
  CHECK(loop.stale_completions() == 0);

  // A second batch continues the numbering.
  const auto more = loop.run(2);
  CHECK(ids.count(more[0].cycle_id) == 0);
}

TEST_CASE("cli: usage and configuration errors exit 2") {
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({"train"}).code == 2);
  CHECK(invoke({"train", "svm"}).code == 2);
  CHECK(invoke({"--help"}).code == 0);

  testkit::TempDir dir("cli-config");
  std::ofstream(dir / "bad.json") << R"({"training": {"split": 1.5}})";
  CHECK(invoke({"--config", (dir / "bad.json").string(), "report"}).code == 2);
  std::ofstream(dir / "neg.json") << R"({"max_retries": -1})";
  CHECK(invoke({"--config", (dir / "neg.json").string(), "report"}).code == 2);
  std::ofstream(dir / "junk.json") << "{ not json";
  CHECK(invoke({"--config", (dir / "junk.json").string(), "report"}).code == 2);
  CHECK(invoke({"--config", (dir / "absent.json").string(), "report"}).code == 2);
  CHECK(invoke({"--store", (dir / "s.jsonl").string(), "gen-data", "--n", "0", "--out", (dir / "h.jsonl").string()}).code == 2);
}

TEST_CASE("cli: end-to-end commands") {
  testkit::TempDir dir("cli");
  const std::string store = (dir / "cycles.jsonl").string();
  const std::string models = (dir / "models").string();
  const std::string data = (dir / "historical.jsonl").string();
  const std::vector<std::string> base{"--store", store, "--models", models};
  auto with = [&](std::vector<std::string> rest) {
    std::vector<std::string> args = base;
    args.insert(args.end(), rest.begin(), rest.end());
    return invoke(args);
  };

  // Runtime failure: nothing to train on yet.
  CHECK(with({"train", "gpr"}).code == 1);
  CHECK(with({"train", "gpr", "--data", (dir / "missing.jsonl").string()}).code == 1);

  REQUIRE(with({"gen-data", "--n", "153", "--seed", "7", "--out", data, "--import"}).code == 0);
  CHECK(line_count(data) == 153);

  const auto anfis = with({"train", "anfis", "--data", data});
  REQUIRE(anfis.code == 0);
  for (const char* t : {"extraction_time", "temperature", "gas_consumed"}) {
    CHECK(fs::exists(fs::path(models) / ("anfis-" + std::string(t) + ".json")));
  }
  const auto history = read_json(fs::path(models) / "anfis-extraction_time.history.json");
  CHECK(history.at("validation_loss").back().get<double>() < 0.01);
  CHECK(history.at("train_loss").size() == 5000);

  REQUIRE(with({"train", "gpr"}).code == 0);
  CHECK(with({"evaluate", "gpr", "--out", (dir / "eval.json").string()}).code == 0);
  CHECK(read_json(dir / "eval.json").at("metrics").at("r2").get<double>() > 0.85);

  REQUIRE(with({"compare", "--out", (dir / "compare.json").string()}).code == 0);
  const auto report = read_json(dir / "compare.json").dump();
  CHECK(report.find("Auditable") != std::string::npos);
  CHECK(report.find("Complex") != std::string::npos);
  CHECK(report.find("anfis") != std::string::npos);
  CHECK(report.find("gpr") != std::string::npos);

  const auto run = with({"run-cycles", "--n", "20", "--model", "gpr", "--out", (dir / "run.json").string()});
  CHECK(run.code == 0);
  store::CycleStore reopened{fs::path(store)};
  const auto loop_records = reopened.query({.source = platform::kClosedLoopSource});
  CHECK(loop_records.size() == 20);
  for (const auto& r : loop_records) {
    CHECK(store::is_terminal(r.status));
    if (r.setpoints && r.prediction && r.status == store::CycleStatus::completed) {
      CHECK(r.prediction->gas <= sim::DryerSim().gas_budget(r.inputs));
    }
  }

  const auto replayed = with({"replay"});
  CHECK(replayed.code == 0);
  const auto summary = with({"report", "--out", (dir / "report.json").string()});
  CHECK(summary.code == 0);
  CHECK(read_json(dir / "report.json").dump().find("closed-loop") != std::string::npos);
}
