#include "ipaas/metrics/report.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

namespace ipaas::metrics {

namespace {

// Ranks models by a key where smaller is better. Equal keys share a rank.
CriterionRanking rank_by(const std::string& criterion, const std::vector<ModelResult>& models,
                         const std::function<double(const ModelResult&)>& key,
                         const std::function<std::string(const ModelResult&, int)>& label) {
  std::vector<const ModelResult*> order;
  order.reserve(models.size());
  for (const auto& m : models) order.push_back(&m);
  std::stable_sort(order.begin(), order.end(), [&](const ModelResult* a, const ModelResult* b) {
    const double ka = key(*a);
    const double kb = key(*b);
    if (ka != kb) return ka < kb;
    return a->name < b->name;
  });

  CriterionRanking ranking{criterion, {}};
  int rank = 0;
  double previous = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double k = key(*order[i]);
    if (i == 0 || k != previous) ++rank;
    previous = k;
    ranking.entries.push_back({order[i]->name, rank, label(*order[i], rank)});
  }
  return ranking;
}

nlohmann::ordered_json metric_json(const MetricSet& m) {
  nlohmann::ordered_json j;
  j["rmse"] = m.rmse;
  j["mse"] = m.mse;
  j["mae"] = m.mae;
  j["r2"] = m.r2 ? nlohmann::ordered_json(*m.r2) : nlohmann::ordered_json(nullptr);
  return j;
}

}  // namespace

double round_seconds(double seconds) { return std::round(seconds * 1000.0) / 1000.0; }

const CriterionRanking& ComparisonReport::criterion(const std::string& name) const {
  for (const auto& r : rankings) {
    if (r.criterion == name) return r;
  }
  throw MetricsError("comparison report has no criterion '" + name + "'");
}

ComparisonReport compare_report(std::vector<ModelResult> results) {
  if (results.size() < 2) throw MetricsError("compare_report: need at least two models");
  std::sort(results.begin(), results.end(),
            [](const ModelResult& a, const ModelResult& b) { return a.name < b.name; });

  ComparisonReport report;
  report.models = results;
  report.rankings.push_back(rank_by(
      "model_performance", results, [](const ModelResult& m) { return m.metrics.rmse; },
      [](const ModelResult&, int rank) {
        return rank == 1 ? "Very satisfactory performance" : "Satisfactory performance";
      }));
  report.rankings.push_back(rank_by(
      "model_build_speed", results,
      [](const ModelResult& m) { return round_seconds(m.train_seconds); },
      [](const ModelResult&, int rank) { return rank == 1 ? "Very Fast" : "Fast"; }));
  report.rankings.push_back(rank_by(
      "explainability", results, [](const ModelResult& m) { return m.explainable ? 0.0 : 1.0; },
      [](const ModelResult& m, int) { return m.explainable ? "Auditable" : "Complex"; }));
  return report;
}

nlohmann::ordered_json ComparisonReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["models"] = nlohmann::ordered_json::array();
  for (const auto& m : models) {
    nlohmann::ordered_json j;
    j["name"] = m.name;
    j["metrics"] = metric_json(m.metrics);
    j["train_seconds"] = m.train_seconds;
    j["explainable"] = m.explainable;
    doc["models"].push_back(j);
  }
  doc["rankings"] = nlohmann::ordered_json::array();
  for (const auto& r : rankings) {
    nlohmann::ordered_json j;
    j["criterion"] = r.criterion;
    j["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : r.entries) {
      j["entries"].push_back({{"model", e.model}, {"rank", e.rank}, {"label", e.label}});
    }
    doc["rankings"].push_back(j);
  }
  return doc;
}

ComparisonReport ComparisonReport::from_json(const nlohmann::json& doc) {
  ComparisonReport report;
  for (const auto& j : doc.at("models")) {
    ModelResult m;
    m.name = j.at("name").get<std::string>();
    const auto& mj = j.at("metrics");
    m.metrics.rmse = mj.at("rmse").get<double>();
    m.metrics.mse = mj.at("mse").get<double>();
    m.metrics.mae = mj.at("mae").get<double>();
    if (!mj.at("r2").is_null()) m.metrics.r2 = mj.at("r2").get<double>();
    m.train_seconds = j.at("train_seconds").get<double>();
    m.explainable = j.at("explainable").get<bool>();
    report.models.push_back(std::move(m));
  }
  for (const auto& j : doc.at("rankings")) {
    CriterionRanking r;
    r.criterion = j.at("criterion").get<std::string>();
    for (const auto& e : j.at("entries")) {
      r.entries.push_back({e.at("model").get<std::string>(), e.at("rank").get<int>(),
                           e.at("label").get<std::string>()});
    }
    report.rankings.push_back(std::move(r));
  }
  return report;
}

std::string ComparisonReport::to_table() const {
  std::ostringstream out;
  out << std::left << std::setw(10) << "model" << std::right << std::setw(12) << "rmse"
      << std::setw(12) << "mae" << std::setw(10) << "r2" << std::setw(12) << "train_s"
      << "  explainability\n";
  for (const auto& m : models) {
    out << std::left << std::setw(10) << m.name << std::right << std::setprecision(6)
        << std::setw(12) << m.metrics.rmse << std::setw(12) << m.metrics.mae << std::setw(10);
    if (m.metrics.r2) {
      out << std::fixed << std::setprecision(4) << *m.metrics.r2 << std::defaultfloat;
    } else {
      out << "n/a";
    }
    out << std::setw(12) << std::fixed << std::setprecision(3) << m.train_seconds
        << std::defaultfloat << "  " << (m.explainable ? "Auditable" : "Complex") << '\n';
  }
  out << '\n';
  for (const auto& r : rankings) {
    out << r.criterion << ':';
    for (const auto& e : r.entries) out << "  " << e.rank << ". " << e.model << " (" << e.label << ")";
    out << '\n';
  }
  return out.str();
}

}  // namespace ipaas::metrics
