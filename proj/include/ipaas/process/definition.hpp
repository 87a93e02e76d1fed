#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipaas/routes/predicate.hpp"

namespace ipaas::process {

using Document = nlohmann::json;

class DefinitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NodeKind { start, service, parallel_split, parallel_join, exclusive_gateway, end };

std::string to_string(NodeKind kind);
NodeKind node_kind_from_string(const std::string& s);

/// Bounded re-entry through a gateway's default edge. Each pass increments
/// `counter` and adds `adjust_delta` to `adjust_variable`; once the counter
/// has reached `max_retries` the instance escalates to manual review.
struct RetryPolicy {
  std::string counter = "retry_count";
  int max_retries = 3;
  std::string adjust_variable = "temperature";
  double adjust_delta = -2.0;
  std::string escalation_topic = "ops.manual-review";
};

struct Node {
  std::string id;
  NodeKind kind = NodeKind::service;
  std::string binding;  // endpoint a service node's task is sent to; may be empty
  std::optional<RetryPolicy> retry;
};

struct Edge {
  std::string from;
  std::string to;
  std::optional<routes::Condition> condition;
  bool is_default = false;
};

struct ProcessDefinition {
  std::string id;
  std::vector<Node> nodes;
  std::vector<Edge> edges;

  const Node& node(const std::string& id) const;
  const Node* find_node(const std::string& id) const;
  std::vector<const Edge*> outgoing(const std::string& id) const;
  std::vector<const Edge*> incoming(const std::string& id) const;
  const Node& start() const;
};

/// Throws DefinitionError unless: node ids are unique, there is exactly one
/// start, every node is reachable from it, each parallel split is closed by
/// one join on all branches, and each exclusive gateway has one default edge
/// with conditions on all others.
void validate(const ProcessDefinition& def);

ProcessDefinition definition_from_json(const Document& j);
Document definition_to_json(const ProcessDefinition& def);
ProcessDefinition load_definition(const std::filesystem::path& path);

}  // namespace ipaas::process
