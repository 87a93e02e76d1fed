#include "ipaas/process/engine.hpp"

#include <algorithm>
#include <atomic>
#include <deque>

#include <spdlog/spdlog.h>

#include "ipaas/routes/route_engine.hpp"

namespace ipaas::process {

std::string to_string(InstanceStatus status) {
  switch (status) {
    case InstanceStatus::running: return "running";
    case InstanceStatus::completed: return "completed";
    case InstanceStatus::manual_review: return "manual-review";
    case InstanceStatus::failed: return "failed";
  }
  return "?";
}

GatewayDecision evaluate_gateway(const ProcessDefinition& def, const std::string& gateway,
                                 Document& variables) {
  const Node& node = def.node(gateway);
  if (node.kind != NodeKind::exclusive_gateway) {
    throw EngineError("node '" + gateway + "' is not an exclusive gateway");
  }
  const Edge* fallback = nullptr;
  try {
    for (const Edge* e : def.outgoing(gateway)) {
      if (e->is_default) {
        fallback = e;
        continue;
      }
      if (routes::evaluate(*e->condition, variables)) return {GatewayDecision::Kind::follow, e, {}};
    }
  } catch (const routes::PredicateError& ex) {
    return {GatewayDecision::Kind::fail, nullptr,
            "gateway '" + gateway + "' cannot decide: " + ex.what()};
  }

  if (!node.retry) return {GatewayDecision::Kind::follow, fallback, {}};

  const RetryPolicy& policy = *node.retry;
  const Document* counter = routes::find_path(variables, policy.counter);
  const int retries = counter != nullptr && counter->is_number() ? counter->get<int>() : 0;
  if (retries >= policy.max_retries) {
    return {GatewayDecision::Kind::escalate, nullptr,
            "gateway '" + gateway + "' rejected the outcome after " + std::to_string(retries) +
                " retries"};
  }
  if (!policy.adjust_variable.empty()) {
    const Document* target = routes::find_path(variables, policy.adjust_variable);
    if (target == nullptr || !target->is_number()) {
      return {GatewayDecision::Kind::fail, nullptr,
              "gateway '" + gateway + "' cannot adjust missing variable '" +
                  policy.adjust_variable + "'"};
    }
    routes::set_path(variables, policy.adjust_variable, target->get<double>() + policy.adjust_delta);
  }
  routes::set_path(variables, policy.counter, retries + 1);
  return {GatewayDecision::Kind::follow, fallback, {}};
}

struct ProcessEngine::Live {
  std::mutex mutex;
  std::atomic<bool> done{false};
  std::shared_ptr<const ProcessDefinition> def;
  ProcessInstance inst;
};

ProcessEngine::ProcessEngine(bus::Broker& broker, EngineOptions options)
    : broker_(broker), options_(std::move(options)) {}

ProcessEngine::~ProcessEngine() = default;

std::string ProcessEngine::deploy(ProcessDefinition def) {
  validate(def);
  std::unique_lock lock(mutex_);
  if (definitions_.contains(def.id)) {
    throw DefinitionError("process '" + def.id + "' is already deployed");
  }
  const std::string id = def.id;
  definitions_.emplace(id, std::make_shared<const ProcessDefinition>(std::move(def)));
  return id;
}

const ProcessDefinition& ProcessEngine::definition(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = definitions_.find(id);
  if (it == definitions_.end()) throw EngineError("unknown process definition '" + id + "'");
  return *it->second;
}

std::shared_ptr<ProcessEngine::Live> ProcessEngine::live(const std::string& instance_id) const {
  std::shared_lock lock(mutex_);
  auto it = instances_.find(instance_id);
  if (it == instances_.end()) throw EngineError("unknown process instance '" + instance_id + "'");
  return it->second;
}

ProcessInstance ProcessEngine::start_instance(const std::string& definition_id, Document variables) {
  auto inst = std::make_shared<Live>();
  {
    std::unique_lock lock(mutex_);
    auto it = definitions_.find(definition_id);
    if (it == definitions_.end()) {
      throw EngineError("cannot start: process '" + definition_id + "' is not deployed");
    }
    inst->def = it->second;
    inst->inst.id = definition_id + "-" + std::to_string(++next_instance_);
    inst->inst.definition_id = definition_id;
    inst->inst.variables = variables.is_object() ? std::move(variables) : Document::object();
    instances_.emplace(inst->inst.id, inst);
    instance_order_.push_back(inst->inst.id);
  }
  std::lock_guard lock(inst->mutex);
  advance(*inst, {inst->def->start().id});
  return inst->inst;
}

ProcessInstance ProcessEngine::handle_completion(const std::string& instance_id,
                                                 const std::string& node_id,
                                                 const Document& result) {
  auto inst = live(instance_id);
  std::lock_guard lock(inst->mutex);
  auto& tokens = inst->inst.tokens;
  auto it = std::find(tokens.begin(), tokens.end(), node_id);
  if (inst->inst.terminal() || it == tokens.end()) {
    spdlog::warn("engine: stale completion for {} on {}", node_id, instance_id);
    throw StaleCompletionError("node '" + node_id + "' of instance '" + instance_id +
                               "' holds no active token");
  }
  const Node& node = inst->def->node(node_id);
  if (node.kind != NodeKind::service) {
    throw EngineError("node '" + node_id + "' is not a service node");
  }
  tokens.erase(it);
  if (result.is_object()) inst->inst.variables.update(result);

  std::vector<std::string> next;
  for (const Edge* e : inst->def->outgoing(node_id)) next.push_back(e->to);
  advance(*inst, std::move(next));
  return inst->inst;
}

void ProcessEngine::advance(Live& live_inst, std::vector<std::string> initial) {
  ProcessInstance& inst = live_inst.inst;
  const ProcessDefinition& def = *live_inst.def;
  std::deque<std::string> pending(initial.begin(), initial.end());

  while (!pending.empty() && !inst.terminal()) {
    const std::string id = pending.front();
    pending.pop_front();
    const Node& node = def.node(id);

    switch (node.kind) {
      case NodeKind::start:
      case NodeKind::parallel_split:
        inst.trace.push_back(id);
        for (const Edge* e : def.outgoing(id)) pending.push_back(e->to);
        break;
      case NodeKind::service:
        inst.trace.push_back(id);
        inst.tokens.push_back(id);
        activate_service(live_inst, node);
        break;
      case NodeKind::parallel_join: {
        const int arrived = ++inst.join_arrivals[id];
        if (arrived == static_cast<int>(def.incoming(id).size())) {
          inst.join_arrivals.erase(id);
          inst.trace.push_back(id);
          for (const Edge* e : def.outgoing(id)) pending.push_back(e->to);
        }
        break;
      }
      case NodeKind::exclusive_gateway: {
        inst.trace.push_back(id);
        const GatewayDecision decision = evaluate_gateway(def, id, inst.variables);
        if (decision.kind == GatewayDecision::Kind::follow) {
          pending.push_back(decision.edge->to);
        } else if (decision.kind == GatewayDecision::Kind::escalate) {
          terminate(live_inst, InstanceStatus::manual_review, node.retry->escalation_topic,
                    decision.reason);
        } else {
          terminate(live_inst, InstanceStatus::failed, options_.failure_topic, decision.reason);
        }
        break;
      }
      case NodeKind::end:
        inst.trace.push_back(id);
        break;
    }
  }

  if (!inst.terminal() && inst.tokens.empty() && inst.join_arrivals.empty()) {
    inst.status = InstanceStatus::completed;
    live_inst.done = true;
    std::lock_guard lock(status_mutex_);
    status_cv_.notify_all();
  }
}

void ProcessEngine::activate_service(Live& live_inst, const Node& node) {
  if (node.binding.empty()) return;
  const ProcessInstance& inst = live_inst.inst;
  bus::Envelope task;
  task.payload = inst.variables;
  task.headers[std::string(kInstanceHeader)] = inst.id;
  task.headers[std::string(kNodeHeader)] = node.id;
  task.headers["process-id"] = inst.definition_id;

  const auto ep = routes::Endpoint::parse(node.binding);
  task.destination = ep.name;
  if (ep.scheme == "topic") {
    broker_.publish(ep.name, std::move(task));
  } else if (ep.scheme == "queue") {
    broker_.send(ep.name, std::move(task));
  } else {
    throw EngineError("service node '" + node.id + "' has unsupported binding '" + node.binding + "'");
  }
}

void ProcessEngine::terminate(Live& live_inst, InstanceStatus status, const std::string& topic,
                              const std::string& diagnostic) {
  ProcessInstance& inst = live_inst.inst;
  inst.status = status;
  inst.diagnostic = diagnostic;
  inst.tokens.clear();
  inst.join_arrivals.clear();
  live_inst.done = true;
  if (status == InstanceStatus::failed) spdlog::warn("engine: instance {} failed: {}", inst.id, diagnostic);

  bus::Envelope event;
  event.destination = topic;
  event.payload = inst.variables;
  event.payload["instance_id"] = inst.id;
  event.payload["status"] = to_string(status);
  event.payload["diagnostic"] = diagnostic;
  event.headers[std::string(kInstanceHeader)] = inst.id;
  broker_.publish(topic, std::move(event));

  std::lock_guard lock(status_mutex_);
  status_cv_.notify_all();
}

ProcessInstance ProcessEngine::snapshot(const std::string& instance_id) const {
  auto inst = live(instance_id);
  std::lock_guard lock(inst->mutex);
  return inst->inst;
}

std::vector<std::string> ProcessEngine::instance_ids() const {
  std::shared_lock lock(mutex_);
  return instance_order_;
}

std::optional<std::string> ProcessEngine::find_instance(const std::string& name,
                                                        const Document& value) const {
  std::vector<std::shared_ptr<Live>> candidates;
  {
    std::shared_lock lock(mutex_);
    for (auto it = instance_order_.rbegin(); it != instance_order_.rend(); ++it) {
      candidates.push_back(instances_.at(*it));
    }
  }
  for (const auto& c : candidates) {
    std::lock_guard lock(c->mutex);
    const Document* v = routes::find_path(c->inst.variables, name);
    if (v != nullptr && *v == value) return c->inst.id;
  }
  return std::nullopt;
}

ProcessInstance ProcessEngine::wait_terminal(const std::string& instance_id,
                                             std::chrono::milliseconds timeout) {
  auto inst = live(instance_id);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  {
    std::unique_lock status_lock(status_mutex_);
    if (!status_cv_.wait_until(status_lock, deadline, [&] { return inst->done.load(); })) {
      throw EngineError("instance '" + instance_id + "' did not finish within " +
                        std::to_string(timeout.count()) + " ms");
    }
  }
  std::lock_guard lock(inst->mutex);
  return inst->inst;
}

}  // namespace ipaas::process
