#include "ipaas/platform/canonical.hpp"

namespace ipaas::platform {

namespace {

constexpr const char* kProcess = R"json({
  "id": "grain-drying",
  "nodes": [
    {"id": "start", "kind": "start"},
    {"id": "split", "kind": "parallel-split"},
    {"id": "collect_humidity", "kind": "service", "binding": "topic:sensors.request"},
    {"id": "collect_weight", "kind": "service", "binding": "topic:sensors.request"},
    {"id": "join", "kind": "parallel-join"},
    {"id": "persist", "kind": "service", "binding": "queue:task.persist"},
    {"id": "predict", "kind": "service", "binding": "queue:task.predict"},
    {"id": "acceptable", "kind": "exclusive-gateway",
     "retry": {"counter": "retry_count", "max": 3, "adjust": "temperature", "delta": -2.0,
               "escalation_topic": "ops.manual-review"}},
    {"id": "dispatch", "kind": "service", "binding": "queue:task.dispatch"},
    {"id": "end", "kind": "end"}
  ],
  "edges": [
    {"from": "start", "to": "split"},
    {"from": "split", "to": "collect_humidity"},
    {"from": "split", "to": "collect_weight"},
    {"from": "collect_humidity", "to": "join"},
    {"from": "collect_weight", "to": "join"},
    {"from": "join", "to": "persist"},
    {"from": "persist", "to": "predict"},
    {"from": "predict", "to": "acceptable"},
    {"from": "acceptable", "to": "dispatch", "condition": "predicted_gas <= $gas_budget"},
    {"from": "acceptable", "to": "predict", "default": true},
    {"from": "dispatch", "to": "end"}
  ]
}
)json";

constexpr const char* kRoutes = R"json({
  "routes": [
    {
      "name": "sensor-intake",
      "from": "topic:sensors.raw",
      "steps": [
        {"kind": "translate", "mappings": [
          {"from": "cycle", "to": "cycle_id"},
          {"from": "sensor", "to": "sensor"},
          {"from": "hum_in", "to": "input_humidity", "optional": true},
          {"from": "hum_target", "to": "target_humidity", "optional": true},
          {"from": "weight_t", "to": "weight", "optional": true}
        ]},
        {"kind": "content-route",
         "rules": [
           {"when": "sensor == humidity", "to": "engine:collect_humidity"},
           {"when": "sensor == scale", "to": "engine:collect_weight"}
         ],
         "default": "queue:dlq"}
      ]
    },
    {
      "name": "monitor",
      "from": "topic:sensors.raw",
      "steps": [
        {"kind": "translate", "mappings": [
          {"from": "cycle", "to": "cycle_id"},
          {"from": "hum_in", "to": "input_humidity", "optional": true},
          {"from": "hum_target", "to": "target_humidity", "optional": true},
          {"from": "weight_t", "to": "weight", "optional": true}
        ]},
        {"kind": "aggregate", "key": "cycle_id", "completion": 2, "timeout_ms": 5000}
      ],
      "to": "topic:grain.cycles"
    },
    {
      "name": "persist",
      "from": "queue:task.persist",
      "steps": [
        {"kind": "enrich", "source": "service:oracle.gas-budget"},
        {"kind": "enrich", "source": "service:store.collected"}
      ],
      "to": "engine:persist"
    },
    {
      "name": "predict",
      "from": "queue:task.predict",
      "steps": [
        {"kind": "enrich", "source": "model:anfis"},
        {"kind": "enrich", "source": "service:store.predicted"}
      ],
      "to": "engine:predict"
    },
    {
      "name": "dispatch",
      "from": "queue:task.dispatch",
      "steps": [
        {"kind": "enrich", "source": "service:store.dispatched"}
      ],
      "to": "queue:boiler.setpoints"
    },
    {
      "name": "outcome",
      "from": "topic:boiler.outcomes",
      "steps": [
        {"kind": "enrich", "source": "service:store.completed"}
      ],
      "to": "engine:dispatch"
    },
    {
      "name": "escalation",
      "from": "topic:ops.manual-review",
      "to": "service:store.escalate"
    },
    {
      "name": "failures",
      "from": "topic:ops.failed",
      "to": "service:store.fail"
    }
  ]
}
)json";

}  // namespace

const Document& canonical_process_json() {
  static const Document doc = Document::parse(kProcess);
  return doc;
}

process::ProcessDefinition canonical_process() { return process::definition_from_json(canonical_process_json()); }

const Document& canonical_routes_json() {
  static const Document doc = Document::parse(kRoutes);
  return doc;
}

std::vector<routes::RouteDefinition> canonical_routes(const std::string& model) {
  auto defs = routes::routes_from_json(canonical_routes_json());
  use_model(defs, model);
  return defs;
}

void use_model(std::vector<routes::RouteDefinition>& defs, const std::string& model) {
  for (auto& def : defs) {
    for (auto& step : def.steps) {
      if (auto* e = std::get_if<routes::EnrichConfig>(&step.config); e && e->source.starts_with("model:")) {
        e->source = "model:" + model;
      }
    }
  }
}

}  // namespace ipaas::platform
