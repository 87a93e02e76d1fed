#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ipaas/bus/broker.hpp"
#include "ipaas/platform/training.hpp"
#include "ipaas/process/engine.hpp"
#include "ipaas/routes/route_engine.hpp"
#include "ipaas/sim/dryer.hpp"
#include "ipaas/store/cycle_store.hpp"

namespace ipaas::platform {

inline constexpr const char* kClosedLoopSource = "closed-loop";
/// Shortest extraction time the decision service will command, in hours.
inline constexpr double kMinExtractionHours = 0.1;

struct LoopOptions {
  double budget_factor = 1.10;
  std::uint64_t seed = 7;
  std::chrono::milliseconds cycle_timeout{30000};
  std::optional<std::filesystem::path> bus_log_dir;
  sim::PhysicsConstants physics;
};

struct CycleResult {
  std::string cycle_id;
  std::string instance_id;
  sim::CycleInputs inputs;
  std::string status;  // store status, or "timeout"
  std::vector<std::string> trace;
  int retries = 0;
  double gas_budget = 0.0;
  std::optional<store::Prediction> prediction;
  std::optional<sim::SimOutcome> outcome;
  /// Noise-free drying time at the last predicted temperature.
  std::optional<double> ground_truth_time;
  std::string diagnostic;
};

/// What the boiler device received on its setpoint queue.
struct BoilerCommand {
  std::string cycle_id;
  double temperature = 0.0;
  double extraction_time = 0.0;
  double predicted_gas = 0.0;
  double gas_budget = 0.0;
};

/// FNV-1a of the cycle id; seeds the boiler noise for that cycle.
std::uint64_t cycle_seed(const std::string& cycle_id);
/// Inputs for the index-th fresh cycle of a run seeded with `seed`.
sim::CycleInputs fresh_inputs(const sim::DryerSim& sim, std::uint64_t seed, std::size_t index);

/// The closed control loop: a broker, the route engine, the workflow engine,
/// a decision service answering model requests, and simulated sensor and
/// boiler devices, all persisting into one cycle store.
class DryingLoop {
 public:
  DryingLoop(store::CycleStore& store, ModelSuite suite, LoopOptions options,
             std::vector<routes::RouteDefinition> route_defs, process::ProcessDefinition process);
  /// Canonical routes and workflow.
  DryingLoop(store::CycleStore& store, ModelSuite suite, LoopOptions options = {});
  ~DryingLoop();

  DryingLoop(const DryingLoop&) = delete;
  DryingLoop& operator=(const DryingLoop&) = delete;

  CycleResult run_cycle(const std::string& cycle_id, const sim::CycleInputs& inputs);
  /// Runs n fresh cycles, at most `parallel` at a time. Ids continue after
  /// the closed-loop cycles already in the store; results come back in id order.
  std::vector<CycleResult> run(std::size_t n, std::size_t parallel = 1);

  std::vector<BoilerCommand> boiler_commands() const;
  std::vector<bus::Envelope> events(const std::string& topic) const;
  bus::Broker& broker() { return *broker_; }
  routes::RouteEngine& routes() { return *routes_; }
  process::ProcessEngine& engine() { return *engine_; }
  const sim::DryerSim& simulator() const { return sim_; }
  std::uint64_t stale_completions() const { return stale_.load(); }

 private:
  void register_services();
  void sensor_gateway();
  void decision_service();
  void boiler_device();
  bus::Document decide(const bus::Document& variables) const;
  store::CycleRecord current(const std::string& cycle_id) const;

  store::CycleStore& store_;
  ModelSuite suite_;
  LoopOptions options_;
  sim::DryerSim sim_;
  std::string process_id_;

  std::unique_ptr<bus::Broker> broker_;
  std::unique_ptr<process::ProcessEngine> engine_;
  std::unique_ptr<routes::RouteEngine> routes_;

  mutable std::mutex mutex_;
  std::map<std::string, sim::CycleInputs> field_;  // what the sensors will read per cycle
  std::vector<BoilerCommand> boiler_log_;

  std::atomic<bool> running_{true};
  std::atomic<std::uint64_t> stale_{0};
  std::vector<std::thread> devices_;
};

struct ReplayMismatch {
  std::string cycle_id;
  std::string field;
};

struct ReplayReport {
  std::size_t replayed = 0;
  std::vector<ReplayMismatch> mismatches;
};

/// Re-runs persisted closed-loop cycles against a scratch store and compares
/// status, prediction and outcome with what was recorded.
ReplayReport replay(std::span<const store::CycleRecord> records, const ModelSuite& suite,
                    const LoopOptions& options, std::vector<routes::RouteDefinition> route_defs,
                    process::ProcessDefinition process);

}  // namespace ipaas::platform
