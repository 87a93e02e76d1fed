#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ipaas/metrics/metrics.hpp"

namespace ipaas::metrics {

struct ModelResult {
  std::string name;
  MetricSet metrics;
  double train_seconds = 0.0;
  bool explainable = false;
};

struct RankEntry {
  std::string model;
  int rank = 0;  // dense, 1 = best; ties share a rank
  std::string label;
};

struct CriterionRanking {
  std::string criterion;
  std::vector<RankEntry> entries;  // best first, ties ordered by model name
};

struct ComparisonReport {
  std::vector<ModelResult> models;
  std::vector<CriterionRanking> rankings;

  const CriterionRanking& criterion(const std::string& name) const;

  nlohmann::ordered_json to_json() const;
  static ComparisonReport from_json(const nlohmann::json& doc);
  std::string to_table() const;
};

/// Orders the models on performance (held-out RMSE), build speed (wall time
/// rounded to milliseconds) and explainability. Needs at least two models.
ComparisonReport compare_report(std::vector<ModelResult> results);

/// Wall-clock seconds rounded to three decimals.
double round_seconds(double seconds);

}  // namespace ipaas::metrics
