#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ipaas/metrics/metrics.hpp"
#include "ipaas/models/anfis.hpp"
#include "ipaas/models/gpr.hpp"
#include "ipaas/store/cycle_record.hpp"

namespace ipaas::platform {

inline constexpr const char* kTimeTarget = "extraction_time";
inline constexpr const char* kTemperatureTarget = "temperature";
inline constexpr const char* kGasTarget = "gas_consumed";

/// target_humidity, input_humidity, weight; the gas model adds temperature.
std::vector<std::string> features_for(const std::string& target);
std::vector<double> feature_row(const sim::CycleInputs& in, std::optional<double> temperature = {});

/// Completed records only. Throws models::ModelError for an unknown target or
/// when no usable record remains.
models::Dataset build_dataset(std::span<const store::CycleRecord> records, const std::string& target);

struct ModelOptions {
  std::size_t n_rules = 16;
  models::TrainingConfig anfis;  // its train_fraction and seed also drive the GPR split
  std::vector<models::GprHyper> grid = models::default_grid();
};

struct TrainedModel {
  std::unique_ptr<models::Regressor> model;
  models::TrainingHistory history;          // ANFIS only
  std::optional<models::TuneResult> tuning;  // GPR only
  metrics::MetricSet holdout;               // on the held-out split
};

/// Fits on the training share of the seeded split and scores the rest.
TrainedModel train_model(const std::string& kind, const models::Dataset& data, const ModelOptions& options);

/// The three regressors the decision service consults.
struct ModelSuite {
  std::string kind;
  std::shared_ptr<const models::Regressor> time;
  std::shared_ptr<const models::Regressor> temperature;
  std::shared_ptr<const models::Regressor> gas;
};

ModelSuite train_suite(const std::string& kind, std::span<const store::CycleRecord> records,
                       const ModelOptions& options);
std::filesystem::path model_path(const std::filesystem::path& dir, const std::string& kind,
                                 const std::string& target);
void save_suite(const ModelSuite& suite, const std::filesystem::path& dir);
/// Throws models::ModelError when any of the three files is missing.
ModelSuite load_suite(const std::filesystem::path& dir, const std::string& kind);

}  // namespace ipaas::platform
