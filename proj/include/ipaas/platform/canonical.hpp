#pragma once

#include <string>
#include <vector>

#include "ipaas/process/definition.hpp"
#include "ipaas/routes/route_engine.hpp"

namespace ipaas::platform {

using bus::Document;

/// The drying workflow: parallel sensor collection, persist, predict, a gas
/// gateway that retries with a cooler setpoint, then dispatch to the boiler.
/// Identical to config/drying-process.json.
const Document& canonical_process_json();
process::ProcessDefinition canonical_process();

/// Routes wiring sensors, store, decision model and boiler to the workflow.
/// Identical to config/routes.json apart from the model the predict route asks.
const Document& canonical_routes_json();
std::vector<routes::RouteDefinition> canonical_routes(const std::string& model = "anfis");

/// Points every model enrichment in `defs` at `model`.
void use_model(std::vector<routes::RouteDefinition>& defs, const std::string& model);

}  // namespace ipaas::platform
