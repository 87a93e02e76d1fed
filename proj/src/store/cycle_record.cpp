#include "ipaas/store/cycle_record.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ipaas::store {

using Json = nlohmann::ordered_json;

std::string to_string(CycleStatus status) {
  switch (status) {
    case CycleStatus::collected: return "collected";
    case CycleStatus::predicted: return "predicted";
    case CycleStatus::dispatched: return "dispatched";
    case CycleStatus::completed: return "completed";
    case CycleStatus::manual_review: return "manual-review";
    case CycleStatus::failed: return "failed";
  }
  return "?";
}

CycleStatus cycle_status_from_string(std::string_view s) {
  if (s == "collected") return CycleStatus::collected;
  if (s == "predicted") return CycleStatus::predicted;
  if (s == "dispatched") return CycleStatus::dispatched;
  if (s == "completed") return CycleStatus::completed;
  if (s == "manual-review") return CycleStatus::manual_review;
  if (s == "failed") return CycleStatus::failed;
  throw RecordError("unknown cycle status '" + std::string(s) + "'");
}

bool is_terminal(CycleStatus status) {
  return status == CycleStatus::completed || status == CycleStatus::manual_review ||
         status == CycleStatus::failed;
}

bool legal_transition(CycleStatus from, CycleStatus to) {
  switch (from) {
    case CycleStatus::collected:
      return to == CycleStatus::predicted || to == CycleStatus::failed;
    case CycleStatus::predicted:
      return to == CycleStatus::predicted || to == CycleStatus::dispatched ||
             to == CycleStatus::manual_review || to == CycleStatus::failed;
    case CycleStatus::dispatched:
      return to == CycleStatus::completed || to == CycleStatus::failed;
    default:
      return false;
  }
}

std::int64_t CycleRecord::first_timestamp() const {
  std::int64_t first = std::numeric_limits<std::int64_t>::max();
  for (const auto& [status, ts] : timestamps) first = std::min(first, ts);
  return timestamps.empty() ? 0 : first;
}

bool CycleRecord::same_content(const CycleRecord& o) const {
  return cycle_id == o.cycle_id && inputs == o.inputs && setpoints == o.setpoints &&
         prediction == o.prediction && outcome == o.outcome && status == o.status &&
         timestamps == o.timestamps && source == o.source;
}

void check_invariants(const CycleRecord& r) {
  if (r.cycle_id.empty()) throw RecordError("cycle_id is empty");
  try {
    sim::validate(r.inputs);
    if (r.setpoints) sim::validate(*r.setpoints);
  } catch (const sim::SimError& e) {
    throw RecordError("cycle " + r.cycle_id + ": " + e.what());
  }
  if (r.status == CycleStatus::completed && !r.outcome) {
    throw RecordError("cycle " + r.cycle_id + ": completed without an outcome");
  }
  if (r.status == CycleStatus::predicted && !r.prediction) {
    throw RecordError("cycle " + r.cycle_id + ": predicted without a prediction");
  }
  if (r.status == CycleStatus::dispatched && !r.setpoints) {
    throw RecordError("cycle " + r.cycle_id + ": dispatched without setpoints");
  }
}

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> get_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::string to_dataset_line(const CycleRecord& r) {
  Json j;
  j["cycle_id"] = r.cycle_id;
  j["weight"] = r.inputs.weight;
  j["input_humidity"] = r.inputs.input_humidity;
  j["target_humidity"] = r.inputs.target_humidity;
  j["temperature"] = opt(r.setpoints ? std::optional(r.setpoints->temperature) : std::nullopt);
  j["extraction_time"] = opt(r.outcome ? std::optional(r.outcome->extraction_time) : std::nullopt);
  j["gas_consumed"] = opt(r.outcome ? std::optional(r.outcome->gas_consumed) : std::nullopt);
  j["achieved_humidity"] = opt(r.outcome ? std::optional(r.outcome->achieved_humidity) : std::nullopt);
  j["source"] = r.source;
  j["status"] = to_string(r.status);
  j["setpoint_extraction_time"] =
      opt(r.setpoints ? std::optional(r.setpoints->extraction_time) : std::nullopt);
  if (r.prediction) {
    const auto& p = *r.prediction;
    j["prediction"] = {{"extraction_time", p.extraction_time},
                       {"temperature", p.temperature},
                       {"gas", p.gas},
                       {"model_name", p.model_name},
                       {"retry_count", p.retry_count}};
  } else {
    j["prediction"] = nullptr;
  }
  j["timestamps"] = Json::object();
  for (const auto& [status, ts] : r.timestamps) j["timestamps"][status] = ts;
  return j.dump();
}

CycleRecord from_dataset_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw RecordError(std::string("not a JSON object: ") + e.what());
  }
  if (!j.is_object()) throw RecordError("not a JSON object");
  try {
    CycleRecord r;
    r.cycle_id = j.at("cycle_id").get<std::string>();
    r.inputs.weight = j.at("weight").get<double>();
    r.inputs.input_humidity = j.at("input_humidity").get<double>();
    r.inputs.target_humidity = j.at("target_humidity").get<double>();
    r.source = j.value("source", "");
    r.status = cycle_status_from_string(j.value("status", "collected"));

    const auto temperature = get_opt(j, "temperature");
    const auto setpoint_time = get_opt(j, "setpoint_extraction_time");
    if (temperature && setpoint_time) {
      r.setpoints = sim::Setpoints{*temperature, *setpoint_time, r.inputs.input_humidity,
                                   r.inputs.target_humidity};
    } else if (temperature || setpoint_time) {
      throw RecordError("temperature and setpoint_extraction_time must be given together");
    }

    const auto time = get_opt(j, "extraction_time");
    const auto gas = get_opt(j, "gas_consumed");
    const auto achieved = get_opt(j, "achieved_humidity");
    if (time && gas && achieved) {
      r.outcome = sim::SimOutcome{*time, *gas, *achieved};
    } else if (time || gas || achieved) {
      throw RecordError("outcome fields must be given together");
    }

    if (j.contains("prediction") && !j.at("prediction").is_null()) {
      const auto& p = j.at("prediction");
      r.prediction = Prediction{p.at("extraction_time").get<double>(), p.at("temperature").get<double>(),
                                p.at("gas").get<double>(), p.at("model_name").get<std::string>(),
                                p.at("retry_count").get<int>()};
    }
    if (j.contains("timestamps")) {
      r.timestamps = j.at("timestamps").get<std::map<std::string, std::int64_t>>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw RecordError(std::string("bad field: ") + e.what());
  }
}

}  // namespace ipaas::store
