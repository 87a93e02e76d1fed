#include "ipaas/platform/drying_loop.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include <spdlog/spdlog.h>

#include "ipaas/platform/canonical.hpp"
#include "ipaas/routes/predicate.hpp"

namespace ipaas::platform {

namespace {

constexpr auto kDevicePoll = std::chrono::milliseconds(20);

class LoopError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double number(const bus::Document& doc, const char* key) {
  const bus::Document* v = routes::find_path(doc, key);
  if (v == nullptr || !v->is_number()) throw LoopError(std::string("message lacks numeric '") + key + "'");
  return v->get<double>();
}

std::string text(const bus::Document& doc, const char* key) {
  const bus::Document* v = routes::find_path(doc, key);
  if (v == nullptr || !v->is_string()) throw LoopError(std::string("message lacks '") + key + "'");
  return v->get<std::string>();
}

sim::CycleInputs inputs_of(const bus::Document& doc) {
  return {number(doc, "weight"), number(doc, "input_humidity"), number(doc, "target_humidity")};
}

}  // namespace

std::uint64_t cycle_seed(const std::string& cycle_id) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : cycle_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

sim::CycleInputs fresh_inputs(const sim::DryerSim& sim, std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  return sim.sample_inputs(rng);
}

DryingLoop::DryingLoop(store::CycleStore& store, ModelSuite suite, LoopOptions options)
    : DryingLoop(store, suite, options, canonical_routes(suite.kind), canonical_process()) {}

DryingLoop::DryingLoop(store::CycleStore& store, ModelSuite suite, LoopOptions options,
                       std::vector<routes::RouteDefinition> route_defs, process::ProcessDefinition process)
    : store_(store), suite_(std::move(suite)), options_(std::move(options)), sim_(options_.physics) {
  if (!suite_.time || !suite_.temperature || !suite_.gas) {
    throw LoopError("decision service needs time, temperature and gas models");
  }
  broker_ = std::make_unique<bus::Broker>(bus::BrokerOptions{options_.bus_log_dir});
  engine_ = std::make_unique<process::ProcessEngine>(*broker_);
  routes_ = std::make_unique<routes::RouteEngine>(*broker_);
  process_id_ = engine_->deploy(std::move(process));

  register_services();
  routes_->register_model(suite_.kind, "ml." + suite_.kind);
  routes_->register_sink("engine", [this](const std::string& node, const bus::Envelope& env) {
    std::string instance;
    if (auto h = env.header(process::kInstanceHeader)) {
      instance = *h;
    } else if (const auto* id = routes::find_path(env.payload, "cycle_id")) {
      auto found = engine_->find_instance("cycle_id", *id);
      if (!found) throw LoopError("no process instance for cycle " + id->dump());
      instance = *found;
    } else {
      throw LoopError("completion for '" + node + "' names no instance");
    }
    try {
      engine_->handle_completion(instance, node, env.payload);
    } catch (const process::StaleCompletionError&) {
      ++stale_;
    }
  });
  for (auto& def : route_defs) routes_->register_route(std::move(def));

  devices_.emplace_back([this] { sensor_gateway(); });
  devices_.emplace_back([this] { decision_service(); });
  devices_.emplace_back([this] { boiler_device(); });
  routes_->start();
}

DryingLoop::~DryingLoop() {
  routes_->stop();
  running_ = false;
  for (auto& t : devices_) t.join();
}

store::CycleRecord DryingLoop::current(const std::string& cycle_id) const {
  auto r = store_.get(cycle_id);
  if (!r) throw LoopError("cycle " + cycle_id + " is not in the store");
  return *r;
}

void DryingLoop::register_services() {
  auto now = [] { return static_cast<std::int64_t>(bus::now_ms()); };

  routes_->register_service("oracle.gas-budget", [this](const bus::Envelope& e) {
    return bus::Document{{"gas_budget", sim_.gas_budget(inputs_of(e.payload), options_.budget_factor)}};
  });

  routes_->register_service("store.collected", [this, now](const bus::Envelope& e) {
    store::CycleRecord r;
    r.cycle_id = text(e.payload, "cycle_id");
    r.inputs = inputs_of(e.payload);
    r.status = store::CycleStatus::collected;
    r.source = kClosedLoopSource;
    r.timestamps["collected"] = now();
    store_.append(std::move(r));
    return bus::Document::object();
  });

  routes_->register_service("store.predicted", [this, now](const bus::Envelope& e) {
    store::CycleRecord r = current(text(e.payload, "cycle_id"));
    const auto* retry = routes::find_path(e.payload, "retry_count");
    r.prediction = store::Prediction{number(e.payload, "extraction_time"), number(e.payload, "temperature"),
                                     number(e.payload, "predicted_gas"), text(e.payload, "model_name"),
                                     retry != nullptr && retry->is_number() ? retry->get<int>() : 0};
    r.status = store::CycleStatus::predicted;
    r.timestamps["predicted"] = now();
    store_.append(std::move(r));
    return bus::Document::object();
  });

  routes_->register_service("store.dispatched", [this, now](const bus::Envelope& e) {
    store::CycleRecord r = current(text(e.payload, "cycle_id"));
    r.setpoints = sim::Setpoints{number(e.payload, "temperature"), number(e.payload, "extraction_time"),
                                 r.inputs.input_humidity, r.inputs.target_humidity};
    r.status = store::CycleStatus::dispatched;
    r.timestamps["dispatched"] = now();
    store_.append(std::move(r));
    return bus::Document::object();
  });

  routes_->register_service("store.completed", [this, now](const bus::Envelope& e) {
    store::CycleRecord r = current(text(e.payload, "cycle_id"));
    r.outcome = sim::SimOutcome{number(e.payload, "actual_extraction_time"), number(e.payload, "gas_consumed"),
                                number(e.payload, "achieved_humidity")};
    r.status = store::CycleStatus::completed;
    r.timestamps["completed"] = now();
    store_.append(std::move(r));
    return bus::Document::object();
  });

  routes_->register_service("store.escalate", [this, now](const bus::Envelope& e) {
    store::CycleRecord r = current(text(e.payload, "cycle_id"));
    r.status = store::CycleStatus::manual_review;
    r.timestamps["manual-review"] = now();
    store_.append(std::move(r));
    return bus::Document::object();
  });

  routes_->register_service("store.fail", [this, now](const bus::Envelope& e) {
    const std::string id = text(e.payload, "cycle_id");
    auto existing = store_.get(id);
    store::CycleRecord r;
    if (existing) {
      if (store::is_terminal(existing->status)) return bus::Document::object();
      r = *existing;
    } else {
      r.cycle_id = id;
      r.inputs = inputs_of(e.payload);
      r.source = kClosedLoopSource;
    }
    r.status = store::CycleStatus::failed;
    r.timestamps["failed"] = now();
    store_.append(std::move(r));
    return bus::Document::object();
  });
}

bus::Document DryingLoop::decide(const bus::Document& v) const {
  const sim::CycleInputs in = inputs_of(v);
  const auto base = feature_row(in);
  const auto* retry = routes::find_path(v, "retry_count");
  const bool retrying = retry != nullptr && retry->is_number() && retry->get<int>() > 0;
  // On a retry the workflow has already moved the temperature; keep its value.
  double temperature = retrying && routes::find_path(v, "temperature") != nullptr
                           ? number(v, "temperature")
                           : suite_.temperature->predict(base).value;
  temperature = std::clamp(temperature, 60.0, 120.0);
  const double time = std::max(kMinExtractionHours, suite_.time->predict(base).value);
  const double gas = suite_.gas->predict(feature_row(in, temperature)).value;
  return {{"temperature", temperature},
          {"extraction_time", time},
          {"predicted_gas", gas},
          {"model_name", suite_.kind}};
}

void DryingLoop::decision_service() {
  const std::string queue = "ml." + suite_.kind;
  while (running_) {
    auto req = broker_->try_receive(queue, kDevicePoll);
    if (!req) continue;
    bus::Envelope resp;
    try {
      resp.payload = decide(req->payload);
    } catch (const std::exception& ex) {
      resp.headers[std::string(routes::kErrorHeader)] = ex.what();
    }
    broker_->reply(*req, std::move(resp));
  }
}

void DryingLoop::sensor_gateway() {
  auto sub = broker_->subscribe("sensors.request", "sensor-gateway");
  while (running_) {
    for (auto& task : broker_->poll_wait(sub, 16, kDevicePoll)) try {
      const auto node = task.header(process::kNodeHeader).value_or("");
      const auto* id = routes::find_path(task.payload, "cycle_id");
      if (id == nullptr || !id->is_string()) {
        spdlog::warn("sensor gateway: task {} names no cycle", task.id);
        continue;
      }
      sim::CycleInputs in;
      {
        std::lock_guard lock(mutex_);
        auto it = field_.find(id->get<std::string>());
        if (it == field_.end()) {
          spdlog::warn("sensor gateway: no readings for cycle {}", id->get<std::string>());
          continue;
        }
        in = it->second;
      }
      bus::Envelope reading;
      reading.destination = "sensors.raw";
      reading.headers = task.headers;
      if (node == "collect_weight") {
        reading.payload = {{"cycle", *id}, {"sensor", "scale"}, {"weight_t", in.weight}};
      } else {
        reading.payload = {{"cycle", *id},
                           {"sensor", "humidity"},
                           {"hum_in", in.input_humidity},
                           {"hum_target", in.target_humidity}};
      }
      broker_->publish("sensors.raw", std::move(reading));
    } catch (const std::exception& ex) {
      spdlog::warn("sensor gateway: task {} dropped: {}", task.id, ex.what());
    }
  }
}

void DryingLoop::boiler_device() {
  while (running_) {
    auto cmd = broker_->try_receive("boiler.setpoints", kDevicePoll);
    if (!cmd) continue;
    try {
      const auto& p = cmd->payload;
      const std::string id = text(p, "cycle_id");
      const sim::CycleInputs in = inputs_of(p);
      const sim::Setpoints sp{number(p, "temperature"), number(p, "extraction_time"), in.input_humidity,
                              in.target_humidity};
      {
        std::lock_guard lock(mutex_);
        boiler_log_.push_back({id, sp.temperature, sp.extraction_time, number(p, "predicted_gas"),
                               number(p, "gas_budget")});
      }
      std::mt19937_64 rng(cycle_seed(id));
      const sim::SimOutcome out = sim_.simulate(in, sp, rng);
      bus::Envelope result;
      result.destination = "boiler.outcomes";
      result.headers = cmd->headers;
      result.payload = p;
      result.payload["actual_extraction_time"] = out.extraction_time;
      result.payload["gas_consumed"] = out.gas_consumed;
      result.payload["achieved_humidity"] = out.achieved_humidity;
      broker_->publish("boiler.outcomes", std::move(result));
    } catch (const std::exception& ex) {
      spdlog::warn("boiler: rejected setpoint {}: {}", cmd->id, ex.what());
    }
  }
}

CycleResult DryingLoop::run_cycle(const std::string& cycle_id, const sim::CycleInputs& inputs) {
  sim::validate(inputs);
  if (store_.get(cycle_id)) throw LoopError("cycle " + cycle_id + " already exists in the store");
  {
    std::lock_guard lock(mutex_);
    field_[cycle_id] = inputs;
  }

  CycleResult res;
  res.cycle_id = cycle_id;
  res.inputs = inputs;
  const auto started = engine_->start_instance(process_id_, {{"cycle_id", cycle_id}});
  res.instance_id = started.id;

  process::ProcessInstance fin;
  try {
    fin = engine_->wait_terminal(started.id, options_.cycle_timeout);
  } catch (const process::EngineError& ex) {
    fin = engine_->snapshot(started.id);
    res.status = "timeout";
    res.diagnostic = ex.what();
  }
  res.trace = fin.trace;
  if (res.diagnostic.empty()) res.diagnostic = fin.diagnostic;
  if (const auto* r = routes::find_path(fin.variables, "retry_count"); r && r->is_number()) {
    res.retries = r->get<int>();
  }
  if (const auto* b = routes::find_path(fin.variables, "gas_budget"); b && b->is_number()) {
    res.gas_budget = b->get<double>();
  }

  if (res.status.empty()) {
    auto rec = store_.wait_for(
        cycle_id, [](const store::CycleRecord& r) { return store::is_terminal(r.status); },
        options_.cycle_timeout);
    if (rec) {
      res.status = store::to_string(rec->status);
      res.prediction = rec->prediction;
      res.outcome = rec->outcome;
      if (rec->prediction) res.ground_truth_time = sim_.drying_time(inputs, rec->prediction->temperature);
    } else {
      res.status = "timeout";
      res.diagnostic = "store never recorded a final status for " + cycle_id;
    }
  }
  {
    std::lock_guard lock(mutex_);
    field_.erase(cycle_id);
  }
  return res;
}

std::vector<CycleResult> DryingLoop::run(std::size_t n, std::size_t parallel) {
  if (parallel == 0) throw LoopError("parallel must be at least 1");
  store::QueryFilter f;
  f.source = kClosedLoopSource;
  const std::size_t offset = store_.query(f).size();
  std::vector<CycleResult> out(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const std::size_t index = offset + i + 1;
      char id[32];
      std::snprintf(id, sizeof id, "cycle-%05zu", index);
      try {
        out[i] = run_cycle(id, fresh_inputs(sim_, options_.seed, index));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(parallel, n); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<BoilerCommand> DryingLoop::boiler_commands() const {
  std::lock_guard lock(mutex_);
  return boiler_log_;
}

std::vector<bus::Envelope> DryingLoop::events(const std::string& topic) const {
  return broker_->read_topic(topic, 0, broker_->topic_size(topic));
}

ReplayReport replay(std::span<const store::CycleRecord> records, const ModelSuite& suite,
                    const LoopOptions& options, std::vector<routes::RouteDefinition> route_defs,
                    process::ProcessDefinition process) {
  store::CycleStore scratch;
  DryingLoop loop(scratch, suite, options, std::move(route_defs), std::move(process));
  ReplayReport report;
  for (const auto& rec : records) {
    if (rec.source != kClosedLoopSource) continue;
    const CycleResult again = loop.run_cycle(rec.cycle_id, rec.inputs);
    ++report.replayed;
    if (again.status != store::to_string(rec.status)) report.mismatches.push_back({rec.cycle_id, "status"});
    if (again.prediction != rec.prediction) report.mismatches.push_back({rec.cycle_id, "prediction"});
    if (again.outcome != rec.outcome) report.mismatches.push_back({rec.cycle_id, "outcome"});
  }
  return report;
}

}  // namespace ipaas::platform
