#include "ipaas/models/anfis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ipaas/metrics/metrics.hpp"

namespace ipaas::models {

namespace {

constexpr const char* kOriginNames[] = {"auto", "expert"};

RuleOrigin origin_from_string(const std::string& s) {
  if (s == "auto") return RuleOrigin::automatic;
  if (s == "expert") return RuleOrigin::expert;
  throw ModelError("unknown rule origin '" + s + "'");
}

double sq_dist(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).squaredNorm(); }

// Seeded k-means++ followed by Lloyd iterations. Returns cluster centers and
// the assignment of each row.
std::pair<std::vector<Eigen::VectorXd>, std::vector<std::size_t>> kmeans(const Eigen::MatrixXd& X,
                                                                          std::size_t k,
                                                                          std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(X.rows());
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> centers;
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centers.push_back(X.row(static_cast<Eigen::Index>(pick(rng))).transpose());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(X.row(static_cast<Eigen::Index>(i)).transpose(), centers.back()));
      total += d2[i];
    }
    std::size_t chosen = n - 1;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        if (u < d2[i]) {
          chosen = i;
          break;
        }
        u -= d2[i];
        chosen = i;  // rounding fallback: last positive-weight row
      }
    } else {
      chosen = pick(rng);
    }
    centers.push_back(X.row(static_cast<Eigen::Index>(chosen)).transpose());
  }

  std::vector<std::size_t> assign(n, k);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::VectorXd x = X.row(static_cast<Eigen::Index>(i)).transpose();
      std::size_t best = 0;
      double best_d = sq_dist(x, centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(x, centers[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    std::vector<Eigen::VectorXd> sums(k, Eigen::VectorXd::Zero(X.cols()));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[assign[i]] += X.row(static_cast<Eigen::Index>(i)).transpose();
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers[c] = sums[c] / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the row worst served by its own center.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = sq_dist(X.row(static_cast<Eigen::Index>(i)).transpose(), centers[assign[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centers[c] = X.row(static_cast<Eigen::Index>(far)).transpose();
      assign[far] = c;
      changed = true;
    }
  }
  return {centers, assign};
}

std::size_t rule_params(std::size_t d) { return 3 * d + 1; }

}  // namespace

std::string to_string(RuleOrigin origin) { return kOriginNames[static_cast<int>(origin)]; }

void TrainingConfig::validate() const {
  if (epochs < 1) throw ModelError("training: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ModelError("training: learning_rate must be > 0");
  if (!(huber_delta > 0.0)) throw ModelError("training: huber_delta must be > 0");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ModelError("training: split must lie strictly between 0 and 1");
  }
}

nlohmann::json TrainingConfig::to_json() const {
  return {{"epochs", epochs},          {"learning_rate", learning_rate},
          {"huber_delta", huber_delta}, {"train_fraction", train_fraction},
          {"seed", seed},              {"beta1", beta1},
          {"beta2", beta2},            {"epsilon", epsilon},
          {"loss", loss == LossKind::huber ? "huber" : "half-squared"}};
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
  TrainingConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.huber_delta = j.value("huber_delta", c.huber_delta);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.seed = j.value("seed", c.seed);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.loss = j.value("loss", std::string("huber")) == "half-squared" ? LossKind::half_squared
                                                                   : LossKind::huber;
  return c;
}

AnfisModel::AnfisModel(std::vector<Rule> rules, Normalization norm, std::vector<std::string> features,
                       std::string target)
    : rules_(std::move(rules)),
      norm_(std::move(norm)),
      features_(std::move(features)),
      target_(std::move(target)) {
  check_rules();
}

void AnfisModel::check_rules() const {
  if (rules_.empty()) throw ModelError("anfis: model needs at least one rule");
  const std::size_t d = dim();
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const Rule& r = rules_[i];
    if (r.dim() != d || static_cast<std::size_t>(r.widths.size()) != d ||
        static_cast<std::size_t>(r.coefficients.size()) != d) {
      throw ModelError("anfis: rule " + std::to_string(i) + " does not match input dimension " +
                       std::to_string(d));
    }
    if (!(r.widths.array() > 0.0).all()) {
      throw ModelError("anfis: rule " + std::to_string(i) + " has a non-positive width");
    }
  }
}

AnfisModel AnfisModel::init_from_data(const Dataset& data, std::size_t n_rules,
                                      std::vector<Rule> expert_rules, std::uint64_t seed) {
  data.check();
  if (n_rules == 0) throw ModelError("anfis: n_rules must be >= 1");
  if (data.rows() < n_rules) {
    throw ModelError("anfis: dataset has " + std::to_string(data.rows()) + " rows, fewer than " +
                     std::to_string(n_rules) + " rules");
  }
  Normalization norm = Normalization::fit(data, false);
  const Eigen::MatrixXd Xn = norm.normalize_inputs(data.X);
  const auto d = static_cast<Eigen::Index>(data.dim());

  auto [centers, assign] = kmeans(Xn, n_rules, seed);
  std::vector<Rule> rules;
  for (std::size_t c = 0; c < n_rules; ++c) {
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(d);
    std::size_t count = 0;
    for (std::size_t i = 0; i < assign.size(); ++i) {
      if (assign[i] != c) continue;
      sum_sq += (Xn.row(static_cast<Eigen::Index>(i)).transpose() - centers[c]).cwiseAbs2();
      ++count;
    }
    Rule r;
    r.centers = centers[c];
    r.widths = count > 0 ? Eigen::VectorXd((sum_sq / static_cast<double>(count)).cwiseSqrt())
                         : Eigen::VectorXd::Zero(d);
    r.widths = r.widths.cwiseMax(kMinWidth);
    r.coefficients = Eigen::VectorXd::Zero(d);
    r.bias = 0.0;
    rules.push_back(std::move(r));
  }
  for (Rule& e : expert_rules) {
    e.origin = RuleOrigin::expert;
    e.antecedent_frozen = true;
    if (e.coefficients.size() == 0) e.coefficients = Eigen::VectorXd::Zero(d);
    rules.push_back(std::move(e));
  }
  return AnfisModel(std::move(rules), std::move(norm), data.features, data.target);
}

ForwardResult AnfisModel::forward(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != dim()) {
    throw ModelError("anfis: input dimension " + std::to_string(x.size()) + " != " +
                     std::to_string(dim()));
  }
  if (!x.allFinite()) throw ModelError("anfis: non-finite input");
  const std::size_t m = rules_.size();
  ForwardResult out;
  out.firing.resize(static_cast<Eigen::Index>(m));
  // Log-domain firing keeps the normalization finite far from every center.
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    const Rule& r = rules_[i];
    const double lw = -0.5 * ((x - r.centers).array() / r.widths.array()).square().sum();
    out.firing(static_cast<Eigen::Index>(i)) = lw;
    max_log = std::max(max_log, lw);
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < out.firing.size(); ++i) {
    out.firing(i) = std::exp(out.firing(i) - max_log);
    total += out.firing(i);
  }
  out.firing /= total;
  for (std::size_t i = 0; i < m; ++i) {
    out.y += out.firing(static_cast<Eigen::Index>(i)) * rules_[i].consequent(x);
  }
  return out;
}

Eigen::VectorXd AnfisModel::parameters() const {
  const std::size_t d = dim();
  Eigen::VectorXd p(static_cast<Eigen::Index>(rules_.size() * rule_params(d)));
  Eigen::Index k = 0;
  for (const Rule& r : rules_) {
    p.segment(k, r.centers.size()) = r.centers;
    k += r.centers.size();
    p.segment(k, r.widths.size()) = r.widths;
    k += r.widths.size();
    p.segment(k, r.coefficients.size()) = r.coefficients;
    k += r.coefficients.size();
    p(k++) = r.bias;
  }
  return p;
}

void AnfisModel::set_parameters(const Eigen::VectorXd& p) {
  const auto d = static_cast<Eigen::Index>(dim());
  if (static_cast<std::size_t>(p.size()) != rules_.size() * rule_params(dim())) {
    throw ModelError("anfis: parameter vector has the wrong length");
  }
  Eigen::Index k = 0;
  for (Rule& r : rules_) {
    r.centers = p.segment(k, d);
    k += d;
    r.widths = p.segment(k, d);
    k += d;
    r.coefficients = p.segment(k, d);
    k += d;
    r.bias = p(k++);
  }
}

double AnfisModel::loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double delta,
                        LossKind kind) const {
  std::vector<double> residuals;
  residuals.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    residuals.push_back(forward(X.row(n).transpose()).y - y(n));
  }
  if (kind == LossKind::huber) return metrics::huber(residuals, delta);
  double total = 0.0;
  for (double r : residuals) total += 0.5 * r * r;
  return residuals.empty() ? 0.0 : total / static_cast<double>(residuals.size());
}

double AnfisModel::loss_and_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     double delta, LossKind kind, Eigen::VectorXd& grad) const {
  const std::size_t d = dim();
  const std::size_t m = rules_.size();
  const std::size_t stride = rule_params(d);
  grad.setZero(static_cast<Eigen::Index>(m * stride));
  if (X.rows() == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(X.rows());

  std::vector<double> logw(m), f(m);
  double total_loss = 0.0;
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    Eigen::VectorXd xv = X.row(n).transpose();
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      const Rule& r = rules_[i];
      double lw = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double z = (xv(static_cast<Eigen::Index>(j)) - r.centers(static_cast<Eigen::Index>(j))) /
                         r.widths(static_cast<Eigen::Index>(j));
        lw -= 0.5 * z * z;
      }
      logw[i] = lw;
      max_log = std::max(max_log, lw);
      f[i] = r.consequent(xv);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      logw[i] = std::exp(logw[i] - max_log);
      total += logw[i];
    }
    double out = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      logw[i] /= total;  // now the normalized firing strength
      out += logw[i] * f[i];
    }

    const double r = out - y(n);
    double g = 0.0;
    if (kind == LossKind::huber) {
      const double a = std::abs(r);
      total_loss += a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
      g = metrics::huber_derivative(r, delta) * inv_n;
    } else {
      total_loss += 0.5 * r * r;
      g = r * inv_n;
    }

    for (std::size_t i = 0; i < m; ++i) {
      const Rule& rule = rules_[i];
      const double wi = logw[i];
      double* gr = grad.data() + i * stride;
      const double spread = g * wi * (f[i] - out);
      for (std::size_t j = 0; j < d; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double diff = xv(jj) - rule.centers(jj);
        const double s = rule.widths(jj);
        if (!rule.antecedent_frozen) {
          gr[j] += spread * diff / (s * s);
          gr[d + j] += spread * diff * diff / (s * s * s);
        }
        gr[2 * d + j] += g * wi * xv(jj);
      }
      gr[3 * d] += g * wi;
    }
  }
  return total_loss * inv_n;
}

TrainingHistory AnfisModel::train(const Dataset& data, const TrainingConfig& config) {
  config.validate();
  data.check();
  if (data.rows() < 10) {
    throw ModelError("anfis: training needs at least 10 samples, got " + std::to_string(data.rows()));
  }
  if (data.dim() != dim()) throw ModelError("anfis: dataset dimension does not match the model");

  const Eigen::MatrixXd Xn = norm_.normalize_inputs(data.X);
  Eigen::VectorXd yn(data.y.size());
  for (Eigen::Index i = 0; i < yn.size(); ++i) yn(i) = norm_.normalize_target(data.y(i));

  const metrics::Split split = metrics::train_test_split(data.rows(), config.train_fraction, config.seed);
  auto gather = [&](const std::vector<std::size_t>& idx, Eigen::MatrixXd& X, Eigen::VectorXd& y) {
    X.resize(static_cast<Eigen::Index>(idx.size()), Xn.cols());
    y.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      X.row(static_cast<Eigen::Index>(i)) = Xn.row(static_cast<Eigen::Index>(idx[i]));
      y(static_cast<Eigen::Index>(i)) = yn(static_cast<Eigen::Index>(idx[i]));
    }
  };
  Eigen::MatrixXd Xtr, Xva;
  Eigen::VectorXd ytr, yva;
  gather(split.train, Xtr, ytr);
  gather(split.test, Xva, yva);

  const metrics::AdamConfig adam{config.learning_rate, config.beta1, config.beta2, config.epsilon};
  Eigen::VectorXd params = parameters();
  Eigen::VectorXd last_good = params;
  metrics::AdamState state(static_cast<std::size_t>(params.size()));
  Eigen::VectorXd grad;
  const std::size_t d = dim();
  const std::size_t stride = rule_params(d);

  TrainingHistory history;
  history.train_loss.reserve(static_cast<std::size_t>(config.epochs));
  history.validation_loss.reserve(static_cast<std::size_t>(config.epochs));
  const auto started = std::chrono::steady_clock::now();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double train_loss = loss_and_gradient(Xtr, ytr, config.huber_delta, config.loss, grad);
    const double val_loss = loss(Xva, yva, config.huber_delta, config.loss);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss) || !grad.allFinite()) {
      history.diverged = true;
      history.diagnostic = "non-finite loss at epoch " + std::to_string(epoch + 1) +
                           "; restored parameters from epoch " + std::to_string(epoch);
      set_parameters(last_good);
      break;
    }
    history.train_loss.push_back(train_loss);
    history.validation_loss.push_back(val_loss);
    last_good = params;

    metrics::adam_step(state, std::span<double>(params.data(), static_cast<std::size_t>(params.size())),
                       std::span<const double>(grad.data(), static_cast<std::size_t>(grad.size())), adam);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      if (rules_[i].antecedent_frozen) continue;
      for (std::size_t j = 0; j < d; ++j) {
        double& w = params(static_cast<Eigen::Index>(i * stride + d + j));
        w = std::max(w, kMinWidth);
      }
    }
    set_parameters(params);
  }

  history.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  config_ = config;
  history_ = history;
  return history;
}

RegressorPrediction AnfisModel::predict(std::span<const double> raw) const {
  const Eigen::VectorXd x = norm_.normalize_input(raw);
  RegressorPrediction p;
  p.value = norm_.denormalize_target(forward(x).y);
  p.out_of_domain = norm_.out_of_domain(raw);
  return p;
}

std::vector<RuleContribution> AnfisModel::explain(std::span<const double> raw) const {
  const Eigen::VectorXd x = norm_.normalize_input(raw);
  const ForwardResult fr = forward(x);
  std::vector<RuleContribution> out;
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const double c = rules_[i].consequent(x);
    out.push_back({i, rules_[i].origin, fr.firing(static_cast<Eigen::Index>(i)), c,
                   norm_.denormalize_target(c)});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RuleContribution& a, const RuleContribution& b) { return a.strength > b.strength; });
  return out;
}

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json AnfisModel::to_json() const {
  nlohmann::json doc;
  doc["kind"] = "anfis";
  doc["features"] = features_;
  doc["target"] = target_;
  doc["normalization"] = norm_.to_json();
  doc["rules"] = nlohmann::json::array();
  for (const Rule& r : rules_) {
    doc["rules"].push_back({{"centers", vec_json(r.centers)},
                            {"widths", vec_json(r.widths)},
                            {"coefficients", vec_json(r.coefficients)},
                            {"bias", r.bias},
                            {"origin", to_string(r.origin)},
                            {"antecedent_frozen", r.antecedent_frozen}});
  }
  doc["config"] = config_.to_json();
  nlohmann::json summary = {{"epochs_run", history_.train_loss.size()},
                            {"seconds", history_.seconds},
                            {"diverged", history_.diverged}};
  if (!history_.train_loss.empty()) {
    summary["final_train_loss"] = history_.train_loss.back();
    summary["final_validation_loss"] = history_.validation_loss.back();
  }
  if (!history_.diagnostic.empty()) summary["diagnostic"] = history_.diagnostic;
  doc["training"] = summary;
  return doc;
}

AnfisModel AnfisModel::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("kind").get<std::string>() != "anfis") throw ModelError("not an anfis model document");
    std::vector<Rule> rules;
    for (const auto& rj : doc.at("rules")) {
      Rule r;
      r.centers = json_vec(rj.at("centers"));
      r.widths = json_vec(rj.at("widths"));
      r.coefficients = json_vec(rj.at("coefficients"));
      r.bias = rj.at("bias").get<double>();
      r.origin = origin_from_string(rj.at("origin").get<std::string>());
      r.antecedent_frozen = rj.at("antecedent_frozen").get<bool>();
      rules.push_back(std::move(r));
    }
    AnfisModel m(std::move(rules), Normalization::from_json(doc.at("normalization")),
                 doc.at("features").get<std::vector<std::string>>(), doc.at("target").get<std::string>());
    if (doc.contains("config")) m.config_ = TrainingConfig::from_json(doc.at("config"));
    if (doc.contains("training")) {
      const auto& t = doc.at("training");
      m.history_.seconds = t.value("seconds", 0.0);
      m.history_.diverged = t.value("diverged", false);
      m.history_.diagnostic = t.value("diagnostic", std::string());
      if (t.contains("final_train_loss")) {
        m.history_.train_loss = {t.at("final_train_loss").get<double>()};
        m.history_.validation_loss = {t.at("final_validation_loss").get<double>()};
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed anfis model: ") + e.what());
  }
}

}  // namespace ipaas::models
