#include "ipaas/process/definition.hpp"

#include <deque>
#include <map>
#include <fstream>
#include <set>

namespace ipaas::process {

std::string to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::start: return "start";
    case NodeKind::service: return "service";
    case NodeKind::parallel_split: return "parallel-split";
    case NodeKind::parallel_join: return "parallel-join";
    case NodeKind::exclusive_gateway: return "exclusive-gateway";
    case NodeKind::end: return "end";
  }
  return "?";
}

NodeKind node_kind_from_string(const std::string& s) {
  if (s == "start") return NodeKind::start;
  if (s == "service") return NodeKind::service;
  if (s == "parallel-split") return NodeKind::parallel_split;
  if (s == "parallel-join") return NodeKind::parallel_join;
  if (s == "exclusive-gateway") return NodeKind::exclusive_gateway;
  if (s == "end") return NodeKind::end;
  throw DefinitionError("unknown node kind '" + s + "'");
}

const Node* ProcessDefinition::find_node(const std::string& node_id) const {
  for (const auto& n : nodes) {
    if (n.id == node_id) return &n;
  }
  return nullptr;
}

const Node& ProcessDefinition::node(const std::string& node_id) const {
  if (const Node* n = find_node(node_id)) return *n;
  throw DefinitionError("process '" + id + "' has no node '" + node_id + "'");
}

std::vector<const Edge*> ProcessDefinition::outgoing(const std::string& node_id) const {
  std::vector<const Edge*> out;
  for (const auto& e : edges) {
    if (e.from == node_id) out.push_back(&e);
  }
  return out;
}

std::vector<const Edge*> ProcessDefinition::incoming(const std::string& node_id) const {
  std::vector<const Edge*> out;
  for (const auto& e : edges) {
    if (e.to == node_id) out.push_back(&e);
  }
  return out;
}

const Node& ProcessDefinition::start() const {
  for (const auto& n : nodes) {
    if (n.kind == NodeKind::start) return n;
  }
  throw DefinitionError("process '" + id + "' has no start node");
}

namespace {

class BalanceChecker {
 public:
  explicit BalanceChecker(const ProcessDefinition& def) : def_(def) {}

  // The join that closes `split`, or an error if the branches disagree.
  std::string matching_join(const std::string& split) {
    if (auto it = matched_.find(split); it != matched_.end()) return it->second;
    std::optional<std::string> join;
    for (const Edge* e : def_.outgoing(split)) {
      std::set<std::string> visited{split};
      const std::string j = walk(e->to, visited, split);
      if (join && *join != j) {
        throw DefinitionError("parallel split '" + split + "' branches close at different joins ('" +
                              *join + "' and '" + j + "')");
      }
      join = j;
    }
    if (!join) throw DefinitionError("parallel split '" + split + "' has no branches");
    if (def_.incoming(*join).size() != def_.outgoing(split).size()) {
      throw DefinitionError("parallel join '" + *join + "' does not match the branch count of '" +
                            split + "'");
    }
    matched_[split] = *join;
    return *join;
  }

  const std::map<std::string, std::string>& matched() const { return matched_; }

 private:
  // Follows a branch until it reaches a join. Nested splits are skipped over
  // through their own join; loops back into visited nodes are ignored.
  std::string walk(const std::string& node_id, std::set<std::string>& visited,
                   const std::string& split) {
    std::string current = node_id;
    while (true) {
      if (visited.contains(current)) return {};
      visited.insert(current);
      const Node& n = def_.node(current);
      switch (n.kind) {
        case NodeKind::parallel_join:
          return current;
        case NodeKind::end:
          throw DefinitionError("parallel split '" + split + "' has a branch ending at '" +
                                current + "' without a join");
        case NodeKind::parallel_split: {
          const std::string inner = matching_join(current);
          visited.insert(inner);
          current = single_successor(inner);
          break;
        }
        case NodeKind::exclusive_gateway: {
          std::optional<std::string> join;
          for (const Edge* e : def_.outgoing(current)) {
            auto copy = visited;
            const std::string j = walk(e->to, copy, split);
            if (j.empty()) continue;
            if (join && *join != j) {
              throw DefinitionError("gateway '" + current + "' inside split '" + split +
                                    "' leaves through different joins");
            }
            join = j;
          }
          if (!join) return {};
          return *join;
        }
        default:
          current = single_successor(current);
      }
    }
  }

  std::string single_successor(const std::string& node_id) const {
    const auto out = def_.outgoing(node_id);
    if (out.size() != 1) {
      throw DefinitionError("node '" + node_id + "' needs exactly one outgoing edge");
    }
    return out.front()->to;
  }

  const ProcessDefinition& def_;
  std::map<std::string, std::string> matched_;
};

}  // namespace

void validate(const ProcessDefinition& def) {
  if (def.id.empty()) throw DefinitionError("process id is empty");
  std::set<std::string> ids;
  int starts = 0;
  for (const auto& n : def.nodes) {
    if (n.id.empty()) throw DefinitionError("process '" + def.id + "' has a node with empty id");
    if (!ids.insert(n.id).second) throw DefinitionError("duplicate node id '" + n.id + "'");
    if (n.kind == NodeKind::start) ++starts;
  }
  if (starts != 1) {
    throw DefinitionError("process '" + def.id + "' must have exactly one start node (has " +
                          std::to_string(starts) + ")");
  }
  for (const auto& e : def.edges) {
    if (!ids.contains(e.from) || !ids.contains(e.to)) {
      throw DefinitionError("edge " + e.from + " -> " + e.to + " references an unknown node");
    }
  }

  for (const auto& n : def.nodes) {
    const auto in = def.incoming(n.id);
    const auto out = def.outgoing(n.id);
    switch (n.kind) {
      case NodeKind::start:
        if (!in.empty()) throw DefinitionError("start node '" + n.id + "' has incoming edges");
        if (out.size() != 1) throw DefinitionError("start node '" + n.id + "' needs one outgoing edge");
        break;
      case NodeKind::end:
        if (!out.empty()) throw DefinitionError("end node '" + n.id + "' has outgoing edges");
        break;
      case NodeKind::service:
        if (out.size() != 1) throw DefinitionError("service node '" + n.id + "' needs one outgoing edge");
        break;
      case NodeKind::parallel_split:
        if (out.size() < 2) throw DefinitionError("parallel split '" + n.id + "' needs two or more branches");
        break;
      case NodeKind::parallel_join:
        if (in.size() < 2) throw DefinitionError("parallel join '" + n.id + "' needs two or more incoming edges");
        if (out.size() != 1) throw DefinitionError("parallel join '" + n.id + "' needs one outgoing edge");
        break;
      case NodeKind::exclusive_gateway: {
        int defaults = 0;
        std::set<std::string> conditions;
        for (const Edge* e : out) {
          if (e->is_default) {
            ++defaults;
            continue;
          }
          if (!e->condition || e->condition->empty()) {
            throw DefinitionError("gateway '" + n.id + "' edge to '" + e->to + "' has no condition");
          }
          if (!conditions.insert(routes::condition_to_json(*e->condition).dump()).second) {
            throw DefinitionError("gateway '" + n.id + "' has two edges with the same condition");
          }
        }
        if (defaults != 1) {
          throw DefinitionError("gateway '" + n.id + "' is ambiguous: needs exactly one default edge (has " +
                                std::to_string(defaults) + ")");
        }
        if (out.size() < 2) throw DefinitionError("gateway '" + n.id + "' needs two or more outgoing edges");
        break;
      }
    }
  }

  std::set<std::string> reached;
  std::deque<std::string> frontier{def.start().id};
  while (!frontier.empty()) {
    const std::string id = frontier.front();
    frontier.pop_front();
    if (!reached.insert(id).second) continue;
    for (const Edge* e : def.outgoing(id)) frontier.push_back(e->to);
  }
  for (const auto& n : def.nodes) {
    if (!reached.contains(n.id)) throw DefinitionError("node '" + n.id + "' is unreachable from start");
  }

  BalanceChecker balance(def);
  std::set<std::string> joins_matched;
  for (const auto& n : def.nodes) {
    if (n.kind == NodeKind::parallel_split) joins_matched.insert(balance.matching_join(n.id));
  }
  for (const auto& n : def.nodes) {
    if (n.kind == NodeKind::parallel_join && !joins_matched.contains(n.id)) {
      throw DefinitionError("parallel join '" + n.id + "' has no matching split");
    }
  }
}

ProcessDefinition definition_from_json(const Document& j) {
  ProcessDefinition def;
  try {
    def.id = j.at("id").get<std::string>();
    for (const auto& nj : j.at("nodes")) {
      Node n;
      n.id = nj.at("id").get<std::string>();
      n.kind = node_kind_from_string(nj.at("kind").get<std::string>());
      n.binding = nj.value("binding", "");
      if (nj.contains("retry")) {
        const auto& rj = nj.at("retry");
        RetryPolicy p;
        p.counter = rj.value("counter", p.counter);
        p.max_retries = rj.value("max", p.max_retries);
        p.adjust_variable = rj.value("adjust", p.adjust_variable);
        p.adjust_delta = rj.value("delta", p.adjust_delta);
        p.escalation_topic = rj.value("escalation_topic", p.escalation_topic);
        n.retry = p;
      }
      def.nodes.push_back(std::move(n));
    }
    for (const auto& ej : j.at("edges")) {
      Edge e;
      e.from = ej.at("from").get<std::string>();
      e.to = ej.at("to").get<std::string>();
      e.is_default = ej.value("default", false);
      if (ej.contains("condition")) e.condition = routes::condition_from_json(ej.at("condition"));
      def.edges.push_back(std::move(e));
    }
  } catch (const Document::exception& ex) {
    throw DefinitionError(std::string("malformed process definition: ") + ex.what());
  } catch (const routes::PredicateError& ex) {
    throw DefinitionError(std::string("malformed gateway condition: ") + ex.what());
  }
  return def;
}

Document definition_to_json(const ProcessDefinition& def) {
  Document j;
  j["id"] = def.id;
  j["nodes"] = Document::array();
  for (const auto& n : def.nodes) {
    Document nj{{"id", n.id}, {"kind", to_string(n.kind)}};
    if (!n.binding.empty()) nj["binding"] = n.binding;
    if (n.retry) {
      nj["retry"] = {{"counter", n.retry->counter},
                     {"max", n.retry->max_retries},
                     {"adjust", n.retry->adjust_variable},
                     {"delta", n.retry->adjust_delta},
                     {"escalation_topic", n.retry->escalation_topic}};
    }
    j["nodes"].push_back(std::move(nj));
  }
  j["edges"] = Document::array();
  for (const auto& e : def.edges) {
    Document ej{{"from", e.from}, {"to", e.to}};
    if (e.is_default) ej["default"] = true;
    if (e.condition) ej["condition"] = routes::condition_to_json(*e.condition);
    j["edges"].push_back(std::move(ej));
  }
  return j;
}

ProcessDefinition load_definition(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DefinitionError("cannot open process file " + path.string());
  try {
    return definition_from_json(Document::parse(in));
  } catch (const Document::parse_error& e) {
    throw DefinitionError("process file " + path.string() + ": " + e.what());
  }
}

}  // namespace ipaas::process
