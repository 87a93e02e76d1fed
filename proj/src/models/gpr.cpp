#include "ipaas/models/gpr.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "ipaas/metrics/metrics.hpp"

namespace ipaas::models {

void GprHyper::validate() const {
  if (!(signal_std > 0.0) || !std::isfinite(signal_std)) throw ModelError("gpr: sigma_f must be > 0");
  if (!(length_scale > 0.0) || !std::isfinite(length_scale)) {
    throw ModelError("gpr: length scale must be > 0");
  }
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ModelError("gpr: sigma_n must be >= 0");
}

nlohmann::json GprHyper::to_json() const {
  return {{"signal_std", signal_std}, {"length_scale", length_scale}, {"noise_std", noise_std}};
}

GprHyper GprHyper::from_json(const nlohmann::json& j) {
  GprHyper h;
  h.signal_std = j.at("signal_std").get<double>();
  h.length_scale = j.at("length_scale").get<double>();
  h.noise_std = j.at("noise_std").get<double>();
  h.validate();
  return h;
}

double exponential_kernel(std::span<const double> a, std::span<const double> b, const GprHyper& h) {
  if (a.size() != b.size()) throw ModelError("gpr kernel: dimension mismatch");
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return h.signal_std * h.signal_std * std::exp(-std::sqrt(d2) / h.length_scale);
}

namespace {

std::span<const double> row_span(const Eigen::MatrixXd& M, Eigen::Index r, Eigen::VectorXd& buf) {
  buf = M.row(r).transpose();
  return {buf.data(), static_cast<std::size_t>(buf.size())};
}

}  // namespace

Eigen::MatrixXd GprModel::gram() const {
  const Eigen::Index n = X_.rows();
  Eigen::MatrixXd K(n, n);
  Eigen::VectorXd a, b;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      K(i, j) = K(j, i) = exponential_kernel(row_span(X_, i, a), row_span(X_, j, b), hyper_);
    }
  }
  return K;
}

void GprModel::factorize() {
  Eigen::MatrixXd A = gram();
  A.diagonal().array() += hyper_.noise_std * hyper_.noise_std + kJitter;
  const double max_diag = A.diagonal().maxCoeff();
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  const bool failed = llt.info() != Eigen::Success;
  Eigen::MatrixXd L = llt.matrixL();
  Eigen::Index worst = 0;
  double min_pivot = failed ? 0.0 : L.diagonal().minCoeff(&worst);
  if (failed || min_pivot * min_pivot <= kPivotFloor * max_diag) {
    std::ostringstream msg;
    msg << "gpr: kernel matrix is not positive definite";
    if (failed) {
      msg << " (factorization broke down)";
    } else {
      msg << " (smallest pivot " << min_pivot << " at row " << worst << ")";
    }
    throw ModelError(msg.str());
  }
  L_ = std::move(L);
  alpha_ = llt.solve(z_);
}

GprModel GprModel::fit(const Dataset& data, const GprHyper& hyper) {
  hyper.validate();
  data.check();
  if (data.rows() == 0) throw ModelError("gpr: empty dataset");
  const auto started = std::chrono::steady_clock::now();

  GprModel m;
  m.hyper_ = hyper;
  m.features_ = data.features;
  m.target_ = data.target;
  m.norm_ = Normalization::fit(data, true);
  m.X_ = m.norm_.normalize_inputs(data.X);
  const double n = static_cast<double>(data.rows());
  m.y_mean_ = data.y.mean();
  const double var = (data.y.array() - m.y_mean_).square().sum() / n;
  m.y_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
  m.z_ = (data.y.array() - m.y_mean_) / m.y_scale_;
  m.factorize();

  m.seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return m;
}

double GprModel::normalized_variance(const Eigen::VectorXd& x) const {
  const Eigen::Index n = X_.rows();
  Eigen::VectorXd k(n), buf;
  const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < n; ++i) k(i) = exponential_kernel(row_span(X_, i, buf), xs, hyper_);
  const Eigen::VectorXd v = L_.triangularView<Eigen::Lower>().solve(k);
  // At a training point the jitter alone leaves a variance of at most kJitter;
  // taking it off keeps noise-free interpolation at zero spread.
  return std::max(0.0, hyper_.signal_std * hyper_.signal_std - v.squaredNorm() - kJitter);
}

GprPrediction GprModel::predict_with_std(std::span<const double> raw) const {
  if (X_.rows() == 0) throw ModelError("gpr: model is not fitted");
  const Eigen::VectorXd x = norm_.normalize_input(raw);
  const Eigen::Index n = X_.rows();
  Eigen::VectorXd k(n), buf;
  const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < n; ++i) k(i) = exponential_kernel(row_span(X_, i, buf), xs, hyper_);
  GprPrediction p;
  p.mean = y_mean_ + y_scale_ * k.dot(alpha_);
  p.std = y_scale_ * std::sqrt(normalized_variance(x));
  return p;
}

RegressorPrediction GprModel::predict(std::span<const double> raw) const {
  const GprPrediction g = predict_with_std(raw);
  return {g.mean, g.std, norm_.out_of_domain(raw)};
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(M.cols()));
    for (Eigen::Index j = 0; j < M.cols(); ++j) r[static_cast<std::size_t>(j)] = M(i, j);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

nlohmann::json GprModel::to_json() const {
  nlohmann::json doc;
  doc["kind"] = "gpr";
  doc["features"] = features_;
  doc["target"] = target_;
  doc["hyper"] = hyper_.to_json();
  doc["normalization"] = norm_.to_json();
  doc["target_stats"] = {{"mean", y_mean_}, {"scale", y_scale_}};
  doc["inputs"] = matrix_json(X_);
  doc["targets"] = std::vector<double>(z_.data(), z_.data() + z_.size());
  doc["training"] = {{"rows", X_.rows()}, {"seconds", seconds_}};
  return doc;
}

GprModel GprModel::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("kind").get<std::string>() != "gpr") throw ModelError("not a gpr model document");
    GprModel m;
    m.features_ = doc.at("features").get<std::vector<std::string>>();
    m.target_ = doc.at("target").get<std::string>();
    m.hyper_ = GprHyper::from_json(doc.at("hyper"));
    m.norm_ = Normalization::from_json(doc.at("normalization"));
    m.y_mean_ = doc.at("target_stats").at("mean").get<double>();
    m.y_scale_ = doc.at("target_stats").at("scale").get<double>();
    const auto& rows = doc.at("inputs");
    const auto z = doc.at("targets").get<std::vector<double>>();
    if (rows.size() != z.size() || rows.empty()) throw ModelError("gpr model: inputs/targets mismatch");
    m.X_.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.norm_.inputs.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = rows[i].get<std::vector<double>>();
      if (r.size() != m.norm_.inputs.size()) throw ModelError("gpr model: row width mismatch");
      for (std::size_t j = 0; j < r.size(); ++j) {
        m.X_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
      }
    }
    m.z_ = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
    m.seconds_ = doc.contains("training") ? doc.at("training").value("seconds", 0.0) : 0.0;
    m.factorize();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed gpr model: ") + e.what());
  }
}

std::vector<GprHyper> default_grid() {
  std::vector<GprHyper> grid;
  for (double sf : {0.5, 1.0, 2.0}) {
    for (double l : {0.1, 0.2, 0.5, 1.0, 2.0, 5.0}) {
      for (double sn : {0.01, 0.03, 0.1, 0.3}) grid.push_back({sf, l, sn});
    }
  }
  return grid;
}

TuneResult tune(const Dataset& data, const std::vector<GprHyper>& grid, double train_fraction,
                std::uint64_t seed) {
  if (grid.empty()) throw ModelError("gpr tune: empty grid");
  data.check();
  if (data.rows() < 2) throw ModelError("gpr tune: need at least 2 rows");
  const metrics::Split split = metrics::train_test_split(data.rows(), train_fraction, seed);
  const Dataset train = data.subset(split.train);
  const Dataset test = data.subset(split.test);
  const std::vector<double> actual(test.y.data(), test.y.data() + test.y.size());

  TuneResult result;
  bool found = false;
  std::string last_error;
  for (const GprHyper& h : grid) {
    double r2 = 0.0;
    try {
      const GprModel m = GprModel::fit(train, h);
      const metrics::MetricSet ms = metrics::regression_metrics(actual, m.predict_all(test.X));
      // A constant held-out target leaves R^2 undefined; fall back to -MSE so
      // the search still orders candidates.
      r2 = ms.r2 ? *ms.r2 : -ms.mse;
    } catch (const ModelError& e) {
      last_error = e.what();
      continue;
    }
    result.scores.emplace_back(h, r2);
    if (!found || r2 > result.best_r2) {
      result.best = h;
      result.best_r2 = r2;
      found = true;
    }
  }
  if (!found) throw ModelError("gpr tune: every grid point failed to fit (last: " + last_error + ")");
  return result;
}

}  // namespace ipaas::models
