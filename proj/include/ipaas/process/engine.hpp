#pragma once

#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "ipaas/bus/broker.hpp"
#include "ipaas/process/definition.hpp"

namespace ipaas::process {

class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A completion arrived for a node that holds no active token. The instance
/// is left untouched, so repeating a completion is harmless.
class StaleCompletionError : public EngineError {
 public:
  using EngineError::EngineError;
};

enum class InstanceStatus { running, completed, manual_review, failed };

std::string to_string(InstanceStatus status);

inline constexpr std::string_view kInstanceHeader = "instance-id";
inline constexpr std::string_view kNodeHeader = "node-id";

struct ProcessInstance {
  std::string id;
  std::string definition_id;
  Document variables = Document::object();
  std::vector<std::string> tokens;              // service nodes awaiting completion
  std::map<std::string, int> join_arrivals;     // tokens parked at each join
  InstanceStatus status = InstanceStatus::running;
  std::vector<std::string> trace;               // node visits in order
  std::string diagnostic;

  bool terminal() const { return status != InstanceStatus::running; }
};

struct GatewayDecision {
  enum class Kind { follow, escalate, fail } kind = Kind::follow;
  const Edge* edge = nullptr;
  std::string reason;
};

/// Picks the outgoing edge of an exclusive gateway: the first conditional
/// edge whose condition holds, else the default edge. Taking the default edge
/// of a gateway with a retry policy bumps the counter and applies the
/// adjustment, or escalates once the counter is exhausted. A missing variable
/// yields a fail decision.
GatewayDecision evaluate_gateway(const ProcessDefinition& def, const std::string& gateway,
                                 Document& variables);

struct EngineOptions {
  std::string failure_topic = "ops.failed";
};

/// Token-based executor for deployed process definitions. Service nodes send
/// a task (payload = instance variables, headers instance-id/node-id) to
/// their binding and wait for handle_completion. One instance advances at a
/// time; distinct instances advance concurrently.
class ProcessEngine {
 public:
  explicit ProcessEngine(bus::Broker& broker, EngineOptions options = {});
  ~ProcessEngine();

  std::string deploy(ProcessDefinition def);
  const ProcessDefinition& definition(const std::string& id) const;

  ProcessInstance start_instance(const std::string& definition_id, Document variables);
  ProcessInstance handle_completion(const std::string& instance_id, const std::string& node_id,
                                    const Document& result);

  ProcessInstance snapshot(const std::string& instance_id) const;
  std::vector<std::string> instance_ids() const;
  /// Instance whose variable `name` equals `value`, most recent first.
  std::optional<std::string> find_instance(const std::string& name, const Document& value) const;

  /// Blocks until the instance is terminal; throws EngineError on timeout.
  ProcessInstance wait_terminal(const std::string& instance_id, std::chrono::milliseconds timeout);

 private:
  struct Live;

  std::shared_ptr<Live> live(const std::string& instance_id) const;
  void advance(Live& inst, std::vector<std::string> pending);
  void activate_service(Live& inst, const Node& node);
  void terminate(Live& inst, InstanceStatus status, const std::string& topic,
                 const std::string& diagnostic);

  bus::Broker& broker_;
  EngineOptions options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const ProcessDefinition>> definitions_;
  std::map<std::string, std::shared_ptr<Live>> instances_;
  std::vector<std::string> instance_order_;
  std::uint64_t next_instance_ = 0;
  std::mutex status_mutex_;
  std::condition_variable status_cv_;
};

}  // namespace ipaas::process
