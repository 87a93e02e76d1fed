#include "ipaas/models/dataset.hpp"

#include <cmath>
#include <fstream>

#include "ipaas/models/anfis.hpp"
#include "ipaas/models/gpr.hpp"

namespace ipaas::models {

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = features;
  out.target = target;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(r);
    out.y(static_cast<Eigen::Index>(i)) = y(r);
  }
  return out;
}

void Dataset::check() const {
  if (X.rows() != y.size()) throw ModelError("dataset: X and y row counts differ");
  if (!features.empty() && features.size() != dim()) {
    throw ModelError("dataset: feature names do not match the column count");
  }
  if (!X.allFinite() || !y.allFinite()) throw ModelError("dataset: non-finite values");
}

Normalization Normalization::fit(const Dataset& data, bool allow_constant_inputs) {
  if (data.rows() == 0) throw ModelError("normalization: empty dataset");
  Normalization n;
  for (Eigen::Index c = 0; c < data.X.cols(); ++c) {
    FeatureRange r{data.X.col(c).minCoeff(), data.X.col(c).maxCoeff()};
    if (!(r.min < r.max) && !allow_constant_inputs) {
      const std::string name =
          static_cast<std::size_t>(c) < data.features.size() ? data.features[c] : std::to_string(c);
      throw ModelError("degenerate feature '" + name + "' (min = max)");
    }
    n.inputs.push_back(r);
  }
  n.target = {data.y.minCoeff(), data.y.maxCoeff()};
  return n;
}

Eigen::VectorXd Normalization::normalize_input(std::span<const double> raw) const {
  if (raw.size() != inputs.size()) {
    throw ModelError("input has " + std::to_string(raw.size()) + " features, model expects " +
                     std::to_string(inputs.size()));
  }
  Eigen::VectorXd x(static_cast<Eigen::Index>(raw.size()));
  for (std::size_t j = 0; j < raw.size(); ++j) {
    if (!std::isfinite(raw[j])) throw ModelError("non-finite input feature " + std::to_string(j));
    x(static_cast<Eigen::Index>(j)) = (raw[j] - inputs[j].min) / inputs[j].scale();
  }
  return x;
}

Eigen::MatrixXd Normalization::normalize_inputs(const Eigen::MatrixXd& raw) const {
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const Eigen::VectorXd row = raw.row(i).transpose();
    out.row(i) = normalize_input(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())))
                     .transpose();
  }
  return out;
}

bool Normalization::out_of_domain(std::span<const double> raw) const {
  for (std::size_t j = 0; j < raw.size() && j < inputs.size(); ++j) {
    const double half = 0.5 * (inputs[j].max - inputs[j].min);
    if (raw[j] < inputs[j].min - half || raw[j] > inputs[j].max + half) return true;
  }
  return false;
}

nlohmann::json Normalization::to_json() const {
  nlohmann::json j;
  j["inputs"] = nlohmann::json::array();
  for (const auto& r : inputs) j["inputs"].push_back({r.min, r.max});
  j["target"] = {target.min, target.max};
  return j;
}

Normalization Normalization::from_json(const nlohmann::json& j) {
  Normalization n;
  for (const auto& r : j.at("inputs")) n.inputs.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
  n.target = {j.at("target").at(0).get<double>(), j.at("target").at(1).get<double>()};
  return n;
}

std::vector<double> Regressor::predict_all(const Eigen::MatrixXd& raw) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(raw.rows()));
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const Eigen::VectorXd row = raw.row(i).transpose();
    out.push_back(predict(std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))).value);
  }
  return out;
}

void Regressor::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ModelError("cannot write model file " + path);
  out << to_json().dump(2) << '\n';
}

std::unique_ptr<Regressor> regressor_from_json(const nlohmann::json& doc) {
  const std::string kind = doc.at("kind").get<std::string>();
  if (kind == "anfis") return std::make_unique<AnfisModel>(AnfisModel::from_json(doc));
  if (kind == "gpr") return std::make_unique<GprModel>(GprModel::from_json(doc));
  throw ModelError("unknown model kind '" + kind + "'");
}

std::unique_ptr<Regressor> load_regressor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot read model file " + path);
  try {
    return regressor_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("model file " + path + ": " + e.what());
  }
}

}  // namespace ipaas::models
