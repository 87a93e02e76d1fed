#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ipaas/sim/types.hpp"

namespace ipaas::store {

class RecordError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CycleStatus { collected, predicted, dispatched, completed, manual_review, failed };

std::string to_string(CycleStatus status);
CycleStatus cycle_status_from_string(std::string_view s);
bool is_terminal(CycleStatus status);

/// collected -> predicted -> (dispatched -> completed | manual-review | failed).
/// predicted -> predicted is a re-prediction; any non-terminal status may fail.
bool legal_transition(CycleStatus from, CycleStatus to);

struct Prediction {
  double extraction_time = 0.0;
  double temperature = 0.0;
  double gas = 0.0;
  std::string model_name;
  int retry_count = 0;
  bool operator==(const Prediction&) const = default;
};

struct CycleRecord {
  std::string cycle_id;
  sim::CycleInputs inputs;
  std::optional<sim::Setpoints> setpoints;
  std::optional<Prediction> prediction;
  std::optional<sim::SimOutcome> outcome;
  CycleStatus status = CycleStatus::collected;
  std::map<std::string, std::int64_t> timestamps;  // status name -> ms since epoch
  std::string source;
  std::uint64_t revision = 0;  // assigned by the store; 0 = not yet stored

  std::int64_t first_timestamp() const;
  /// Same content, ignoring the store-assigned revision.
  bool same_content(const CycleRecord& other) const;
};

/// Throws RecordError when a status lacks the fields it implies.
void check_invariants(const CycleRecord& record);

/// One dataset line: cycle_id, weight, input_humidity, target_humidity,
/// temperature, extraction_time, gas_consumed, achieved_humidity, source in
/// that order, followed by status, setpoint_extraction_time, prediction and
/// timestamps. Absent values are null.
std::string to_dataset_line(const CycleRecord& record);
CycleRecord from_dataset_line(std::string_view line);

}  // namespace ipaas::store
