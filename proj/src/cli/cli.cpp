#include "ipaas/cli/cli.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "ipaas/metrics/report.hpp"
#include "ipaas/platform/canonical.hpp"
#include "ipaas/platform/drying_loop.hpp"
#include "ipaas/platform/training.hpp"
#include "ipaas/store/cycle_store.hpp"

namespace ipaas::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void Config::validate() const {
  if (store.empty()) throw ConfigError("config: store path is empty");
  if (models.empty()) throw ConfigError("config: models path is empty");
  if (!(gas_budget_factor > 0.0)) throw ConfigError("config: gas_budget_factor must be > 0");
  if (max_retries < 0) throw ConfigError("config: max_retries must be >= 0");
  if (!(retry_temperature_bias >= 0.0)) throw ConfigError("config: retry temperature bias must be >= 0");
  if (rules < 1) throw ConfigError("config: rules must be >= 1");
  try {
    training.validate();
  } catch (const models::ModelError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const auto& p = physics;
  for (double v : {p.k_dry, p.c_gas, p.alpha, p.budget_factor}) {
    if (!(v > 0.0)) throw ConfigError("config: physics constants must be positive");
  }
  if (p.noise_sigma < 0.0 || p.expert_sigma < 0.0) throw ConfigError("config: noise must be >= 0");
}

Config Config::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  Config c;
  try {
    if (j.contains("store")) c.store = j.at("store").get<std::string>();
    if (j.contains("models")) c.models = j.at("models").get<std::string>();
    if (j.contains("routes")) c.routes = j.at("routes").get<std::string>();
    if (j.contains("process")) c.process = j.at("process").get<std::string>();
    c.gas_budget_factor = j.value("gas_budget_factor", c.gas_budget_factor);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.retry_temperature_bias = j.value("retry_temperature_bias", c.retry_temperature_bias);
    c.seed = j.value("seed", c.seed);
    if (j.contains("training")) {
      const auto& t = j.at("training");
      c.training.epochs = t.value("epochs", c.training.epochs);
      c.training.learning_rate = t.value("learning_rate", c.training.learning_rate);
      c.training.huber_delta = t.value("huber_delta", c.training.huber_delta);
      c.training.train_fraction = t.value("split", c.training.train_fraction);
      c.training.seed = t.value("seed", c.training.seed);
      c.rules = t.value("rules", c.rules);
    }
    if (j.contains("sim")) {
      const auto& s = j.at("sim");
      auto& p = c.physics;
      p.k_dry = s.value("k_dry", p.k_dry);
      p.t_ambient = s.value("t_ambient", p.t_ambient);
      p.c_gas = s.value("c_gas", p.c_gas);
      p.alpha = s.value("alpha", p.alpha);
      p.noise_sigma = s.value("noise_sigma", p.noise_sigma);
      p.expert_sigma = s.value("expert_sigma", p.expert_sigma);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.physics.budget_factor = c.gas_budget_factor;
  return c;
}

Config Config::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

namespace {

class Failure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_json(const fs::path& path, const ordered_json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Failure("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

std::vector<store::CycleRecord> read_dataset(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Failure("cannot read dataset " + path.string());
  std::vector<store::CycleRecord> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(store::from_dataset_line(line));
    } catch (const std::exception& e) {
      throw Failure(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::vector<store::CycleRecord> training_records(const Config& cfg, const std::optional<fs::path>& data) {
  if (data) return read_dataset(*data);
  store::CycleStore store(cfg.store);
  return store.query();
}

std::vector<std::string> targets_for(const std::string& target) {
  if (target == "all") return {platform::kTimeTarget, platform::kTemperatureTarget, platform::kGasTarget};
  if (target != platform::kTimeTarget && target != platform::kTemperatureTarget &&
      target != platform::kGasTarget) {
    throw ConfigError("unknown target '" + target + "'");
  }
  return {target};
}

void check_kind(const std::string& kind) {
  if (kind != "anfis" && kind != "gpr") throw ConfigError("unknown model '" + kind + "' (anfis or gpr)");
}

platform::ModelOptions model_options(const Config& cfg) {
  platform::ModelOptions o;
  o.n_rules = cfg.rules;
  o.anfis = cfg.training;
  return o;
}

metrics::MetricSet holdout_metrics(const models::Regressor& model, const models::Dataset& data,
                                   const Config& cfg) {
  const auto split = metrics::train_test_split(data.rows(), cfg.training.train_fraction, cfg.training.seed);
  const auto test = data.subset(split.test);
  const std::vector<double> actual(test.y.data(), test.y.data() + test.y.size());
  return metrics::regression_metrics(actual, model.predict_all(test.X));
}

ordered_json metrics_json(const metrics::MetricSet& m) {
  ordered_json j{{"rmse", m.rmse}, {"mse", m.mse}, {"mae", m.mae}};
  j["r2"] = m.r2 ? ordered_json(*m.r2) : ordered_json(nullptr);
  return j;
}

std::vector<routes::RouteDefinition> route_set(const Config& cfg, const std::string& kind) {
  auto defs = cfg.routes ? routes::load_routes(*cfg.routes) : platform::canonical_routes(kind);
  platform::use_model(defs, kind);
  return defs;
}

process::ProcessDefinition process_definition(const Config& cfg) {
  auto def = cfg.process ? process::load_definition(*cfg.process) : platform::canonical_process();
  for (auto& n : def.nodes) {
    if (!n.retry) continue;
    n.retry->max_retries = cfg.max_retries;
    n.retry->adjust_delta = -cfg.retry_temperature_bias;
  }
  return def;
}

platform::LoopOptions loop_options(const Config& cfg) {
  platform::LoopOptions o;
  o.budget_factor = cfg.gas_budget_factor;
  o.seed = cfg.seed;
  o.physics = cfg.physics;
  return o;
}

platform::ModelSuite suite_for(const Config& cfg, const std::string& kind, std::ostream& out) {
  bool present = true;
  for (const char* t : {platform::kTimeTarget, platform::kTemperatureTarget, platform::kGasTarget}) {
    present = present && fs::exists(platform::model_path(cfg.models, kind, t));
  }
  if (present) return platform::load_suite(cfg.models, kind);

  store::CycleStore store(cfg.store);
  const auto records = store.query({store::CycleStatus::completed, std::nullopt, std::nullopt, std::nullopt});
  if (records.empty()) {
    throw Failure("no " + kind + " models in " + cfg.models.string() +
                  " and no completed cycles to train on; run gen-data --import first");
  }
  out << "training " << kind << " models on " << records.size() << " completed cycles\n";
  auto suite = platform::train_suite(kind, records, model_options(cfg));
  platform::save_suite(suite, cfg.models);
  return suite;
}

ordered_json result_json(const platform::CycleResult& r) {
  ordered_json j;
  j["cycle_id"] = r.cycle_id;
  j["instance_id"] = r.instance_id;
  j["status"] = r.status;
  j["retries"] = r.retries;
  j["inputs"] = {{"weight", r.inputs.weight},
                 {"input_humidity", r.inputs.input_humidity},
                 {"target_humidity", r.inputs.target_humidity}};
  j["gas_budget"] = r.gas_budget;
  if (r.prediction) {
    j["prediction"] = {{"temperature", r.prediction->temperature},
                       {"extraction_time", r.prediction->extraction_time},
                       {"gas", r.prediction->gas},
                       {"model_name", r.prediction->model_name}};
  }
  if (r.outcome) {
    j["outcome"] = {{"extraction_time", r.outcome->extraction_time},
                    {"gas_consumed", r.outcome->gas_consumed},
                    {"achieved_humidity", r.outcome->achieved_humidity}};
  }
  if (r.ground_truth_time) j["ground_truth_time"] = *r.ground_truth_time;
  j["trace"] = r.trace;
  if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
  return j;
}

// ---- subcommands ------------------------------------------------------------

int cmd_gen_data(const Config& cfg, std::size_t n, std::uint64_t seed, const fs::path& out_path,
                 bool import, std::ostream& out) {
  if (n < 1) throw ConfigError("gen-data: --n must be >= 1");
  const sim::DryerSim sim(cfg.physics);
  const auto records = sim.gen_historical(n, seed);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream file(out_path, std::ios::trunc);
  if (!file) throw Failure("cannot write " + out_path.string());
  for (const auto& r : records) file << store::to_dataset_line(r) << '\n';
  file.close();
  out << "wrote " << records.size() << " cycles to " << out_path.string() << '\n';
  if (import) {
    if (cfg.store.has_parent_path()) fs::create_directories(cfg.store.parent_path());
    store::CycleStore store(cfg.store);
    const auto report = store.import_from(out_path);
    out << "imported " << report.imported << " into " << cfg.store.string();
    if (!report.rejects.empty()) out << " (" << report.rejects.size() << " rejected)";
    out << '\n';
    if (!report.rejects.empty()) return 1;
  }
  return 0;
}

int cmd_train(const Config& cfg, const std::string& kind, const std::string& target,
              const std::optional<fs::path>& data, std::ostream& out) {
  check_kind(kind);
  const auto targets = targets_for(target);
  const auto records = training_records(cfg, data);
  fs::create_directories(cfg.models);
  for (const auto& t : targets) {
    const auto dataset = platform::build_dataset(records, t);
    auto trained = platform::train_model(kind, dataset, model_options(cfg));
    const auto model_file = platform::model_path(cfg.models, kind, t);
    trained.model->save(model_file.string());

    ordered_json history;
    history["model"] = kind;
    history["target"] = t;
    history["rows"] = dataset.rows();
    history["seconds"] = trained.model->train_seconds();
    history["holdout"] = metrics_json(trained.holdout);
    if (kind == "anfis") {
      history["train_loss"] = trained.history.train_loss;
      history["validation_loss"] = trained.history.validation_loss;
      if (trained.history.diverged) history["diagnostic"] = trained.history.diagnostic;
    } else {
      history["best"] = trained.tuning->best.to_json();
      history["best_r2"] = trained.tuning->best_r2;
      ordered_json scores = ordered_json::array();
      for (const auto& [h, r2] : trained.tuning->scores) {
        scores.push_back({{"hyper", h.to_json()}, {"r2", r2}});
      }
      history["tuning"] = scores;
    }
    fs::path history_file = model_file;
    history_file.replace_extension(".history.json");
    write_json(history_file, history);

    out << kind << " " << t << ": " << model_file.string();
    if (kind == "anfis" && !trained.history.train_loss.empty()) {
      out << std::setprecision(4) << " train_loss=" << trained.history.train_loss.back()
          << " validation_loss=" << trained.history.validation_loss.back();
    }
    out << std::setprecision(4) << " holdout_rmse=" << trained.holdout.rmse;
    if (trained.holdout.r2) out << " r2=" << *trained.holdout.r2;
    out << " seconds=" << trained.model->train_seconds() << '\n';
    if (trained.history.diverged) {
      out << "warning: " << trained.history.diagnostic << '\n';
      return 1;
    }
  }
  return 0;
}

int cmd_evaluate(const Config& cfg, const std::string& kind, const std::string& target,
                 const std::optional<fs::path>& data, const std::optional<fs::path>& out_path,
                 std::ostream& out) {
  check_kind(kind);
  targets_for(target);
  const auto model = models::load_regressor(platform::model_path(cfg.models, kind, target).string());
  const auto dataset = platform::build_dataset(training_records(cfg, data), target);
  ordered_json doc{{"model", kind}, {"target", target}};
  doc["metrics"] = metrics_json(holdout_metrics(*model, dataset, cfg));
  out << doc.dump(2) << '\n';
  if (out_path) write_json(*out_path, doc);
  return 0;
}

int cmd_compare(const Config& cfg, const std::string& target, const std::optional<fs::path>& data,
                const std::optional<fs::path>& out_path, std::ostream& out) {
  targets_for(target);
  const auto dataset = platform::build_dataset(training_records(cfg, data), target);
  std::vector<metrics::ModelResult> results;
  for (const std::string kind : {"anfis", "gpr"}) {
    const auto model = models::load_regressor(platform::model_path(cfg.models, kind, target).string());
    results.push_back({kind, holdout_metrics(*model, dataset, cfg), model->train_seconds(), model->explainable()});
  }
  const auto report = metrics::compare_report(std::move(results));
  out << report.to_table();
  if (out_path) write_json(*out_path, report.to_json());
  return 0;
}

int cmd_run_cycles(const Config& cfg, const std::string& kind, std::size_t n, std::size_t parallel,
                   const std::optional<fs::path>& out_path, std::ostream& out) {
  check_kind(kind);
  if (n < 1) throw ConfigError("run-cycles: --n must be >= 1");
  if (parallel < 1) throw ConfigError("run-cycles: --parallel must be >= 1");
  auto routes = route_set(cfg, kind);
  auto process = process_definition(cfg);
  const auto suite = suite_for(cfg, kind, out);

  if (cfg.store.has_parent_path()) fs::create_directories(cfg.store.parent_path());
  store::CycleStore store(cfg.store);
  std::vector<platform::CycleResult> results;
  {
    platform::DryingLoop loop(store, suite, loop_options(cfg), std::move(routes), std::move(process));
    results = loop.run(n, parallel);
  }

  std::map<std::string, int> counts;
  int over_budget = 0;
  for (const auto& r : results) {
    ++counts[r.status];
    if (r.status == "completed" && r.prediction && r.prediction->gas > r.gas_budget) ++over_budget;
    out << r.cycle_id << ' ' << r.status << " retries=" << r.retries;
    if (r.prediction) {
      out << std::fixed << std::setprecision(2) << " T=" << r.prediction->temperature
          << " time=" << r.prediction->extraction_time << " gas=" << r.prediction->gas
          << " budget=" << r.gas_budget;
      out.unsetf(std::ios::floatfield);
    }
    out << '\n';
  }
  out << "summary:";
  for (const auto& [status, count] : counts) out << ' ' << status << '=' << count;
  out << '\n';
  if (out_path) {
    ordered_json doc = ordered_json::array();
    for (const auto& r : results) doc.push_back(result_json(r));
    write_json(*out_path, doc);
  }
  if (counts.contains("timeout") || over_budget > 0) return 1;
  return 0;
}

int cmd_replay(const Config& cfg, const std::optional<std::string>& kind_flag, std::ostream& out) {
  store::CycleStore store(cfg.store);
  store::QueryFilter f;
  f.source = platform::kClosedLoopSource;
  const auto records = store.query(f);
  if (records.empty()) {
    out << "no closed-loop cycles to replay\n";
    return 0;
  }
  std::string kind = kind_flag.value_or("");
  if (kind.empty()) {
    for (const auto& r : records) {
      if (r.prediction) {
        kind = r.prediction->model_name;
        break;
      }
    }
  }
  if (kind.empty()) kind = "anfis";
  check_kind(kind);
  const auto suite = platform::load_suite(cfg.models, kind);
  const auto report = platform::replay(records, suite, loop_options(cfg), route_set(cfg, kind),
                                       process_definition(cfg));
  out << "replayed " << report.replayed << " cycles with " << kind << ": "
      << report.mismatches.size() << " mismatches\n";
  for (const auto& m : report.mismatches) out << "  " << m.cycle_id << ": " << m.field << " differs\n";
  return report.mismatches.empty() ? 0 : 1;
}

int cmd_report(const Config& cfg, const std::optional<fs::path>& out_path, std::ostream& out) {
  store::CycleStore store(cfg.store);
  const auto records = store.query();
  std::map<std::string, int> by_status, by_source;
  double abs_err = 0.0, truth = 0.0, gas = 0.0;
  int measured = 0;
  for (const auto& r : records) {
    ++by_status[store::to_string(r.status)];
    ++by_source[r.source];
    if (r.source == platform::kClosedLoopSource && r.prediction && r.outcome) {
      abs_err += std::abs(r.prediction->extraction_time - r.outcome->extraction_time);
      truth += r.outcome->extraction_time;
      gas += r.outcome->gas_consumed;
      ++measured;
    }
  }
  ordered_json doc;
  doc["store"] = cfg.store.string();
  doc["records"] = records.size();
  doc["by_status"] = by_status;
  doc["by_source"] = by_source;
  if (measured > 0) {
    doc["closed_loop"] = {{"completed", measured},
                          {"mean_abs_time_error", abs_err / measured},
                          {"relative_time_error", abs_err / truth},
                          {"mean_gas", gas / measured}};
  }
  out << doc.dump(2) << '\n';
  if (out_path) write_json(*out_path, doc);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Grain-drying integration platform: data, models and the closed control loop", "ipaas"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path, store_path, models_path, routes_path, process_path, log_level;
  std::optional<double> budget_factor, bias;
  std::optional<int> max_retries;
  app.add_option("--config", config_path, "JSON config file; flags override it");
  app.add_option("--store", store_path, "cycle store file");
  app.add_option("--models", models_path, "directory holding model files");
  app.add_option("--routes", routes_path, "route definition file (default: built-in)");
  app.add_option("--process", process_path, "process definition file (default: built-in)");
  app.add_option("--budget-factor", budget_factor, "gas budget as a multiple of the optimal gas");
  app.add_option("--max-retries", max_retries, "gateway retries before manual review");
  app.add_option("--retry-bias", bias, "temperature decrease per retry, C");
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate historical drying cycles");
  std::size_t gen_n = 153;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_out = "data/historical.jsonl";
  bool gen_import = false;
  gen->add_option("--n", gen_n, "number of cycles");
  gen->add_option("--seed", gen_seed, "RNG seed (default: config seed)");
  gen->add_option("--out", gen_out, "dataset file to write");
  gen->add_flag("--import", gen_import, "also append the cycles to the store");

  // train / evaluate share training overrides
  std::optional<int> epochs;
  std::optional<double> lr, delta, split;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::size_t> rules;
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--epochs", epochs, "ANFIS epochs");
    sub->add_option("--lr", lr, "Adam learning rate");
    sub->add_option("--delta", delta, "Huber delta");
    sub->add_option("--split", split, "training fraction");
    sub->add_option("--train-seed", train_seed, "split and initialization seed");
    sub->add_option("--rules", rules, "ANFIS rules derived from data");
  };

  std::string kind, target = "all";
  std::optional<std::string> data_path, out_path;
  auto* train = app.add_subcommand("train", "train a model family on completed cycles");
  train->add_option("model", kind, "anfis or gpr")->required();
  train->add_option("--target", target, "extraction_time, temperature, gas_consumed or all");
  train->add_option("--data", data_path, "dataset file (default: the store)");
  add_training(train);

  std::string eval_target = platform::kTimeTarget;
  auto* evaluate = app.add_subcommand("evaluate", "score a trained model on the held-out split");
  evaluate->add_option("model", kind, "anfis or gpr")->required();
  evaluate->add_option("--target", eval_target, "model target");
  evaluate->add_option("--data", data_path, "dataset file (default: the store)");
  evaluate->add_option("--out", out_path, "write the metrics here");
  add_training(evaluate);

  auto* compare = app.add_subcommand("compare", "compare ANFIS and GPR on one target");
  compare->add_option("--target", eval_target, "model target");
  compare->add_option("--data", data_path, "dataset file (default: the store)");
  compare->add_option("--out", out_path, "write the report here");
  add_training(compare);

  std::size_t cycles = 20, parallel = 1;
  std::optional<std::uint64_t> run_seed;
  std::string run_model = "anfis";
  auto* run_cycles = app.add_subcommand("run-cycles", "run fresh cycles through the closed loop");
  run_cycles->add_option("--n", cycles, "number of cycles");
  run_cycles->add_option("--model", run_model, "anfis or gpr");
  run_cycles->add_option("--seed", run_seed, "seed for fresh cycle inputs");
  run_cycles->add_option("--parallel", parallel, "cycles in flight at once");
  run_cycles->add_option("--out", out_path, "write per-cycle results here");
  add_training(run_cycles);

  std::optional<std::string> replay_model;
  auto* replay_cmd = app.add_subcommand("replay", "re-run stored closed-loop cycles and compare");
  replay_cmd->add_option("--model", replay_model, "anfis or gpr (default: as recorded)");

  auto* report = app.add_subcommand("report", "summarize the store");
  report->add_option("--out", out_path, "write the summary here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (log_level) spdlog::set_level(spdlog::level::from_str(*log_level));
    Config cfg = config_path ? Config::load(*config_path) : Config{};
    if (store_path) cfg.store = *store_path;
    if (models_path) cfg.models = *models_path;
    if (routes_path) cfg.routes = *routes_path;
    if (process_path) cfg.process = *process_path;
    if (budget_factor) cfg.gas_budget_factor = cfg.physics.budget_factor = *budget_factor;
    if (max_retries) cfg.max_retries = *max_retries;
    if (bias) cfg.retry_temperature_bias = *bias;
    if (epochs) cfg.training.epochs = *epochs;
    if (lr) cfg.training.learning_rate = *lr;
    if (delta) cfg.training.huber_delta = *delta;
    if (split) cfg.training.train_fraction = *split;
    if (train_seed) cfg.training.seed = *train_seed;
    if (rules) cfg.rules = *rules;
    if (run_seed) cfg.seed = *run_seed;
    cfg.validate();

    const std::optional<fs::path> data = data_path ? std::optional<fs::path>(*data_path) : std::nullopt;
    const std::optional<fs::path> outp = out_path ? std::optional<fs::path>(*out_path) : std::nullopt;
    if (gen->parsed()) return cmd_gen_data(cfg, gen_n, gen_seed.value_or(cfg.seed), gen_out, gen_import, out);
    if (train->parsed()) return cmd_train(cfg, kind, target, data, out);
    if (evaluate->parsed()) return cmd_evaluate(cfg, kind, eval_target, data, outp, out);
    if (compare->parsed()) return cmd_compare(cfg, eval_target, data, outp, out);
    if (run_cycles->parsed()) return cmd_run_cycles(cfg, run_model, cycles, parallel, outp, out);
    if (replay_cmd->parsed()) return cmd_replay(cfg, replay_model, out);
    if (report->parsed()) return cmd_report(cfg, outp, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const routes::RouteDefinitionError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const process::DefinitionError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace ipaas::cli
