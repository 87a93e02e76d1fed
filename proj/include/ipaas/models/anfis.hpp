#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ipaas/metrics/adam.hpp"
#include "ipaas/models/dataset.hpp"

namespace ipaas::models {

enum class RuleOrigin { automatic, expert };

std::string to_string(RuleOrigin origin);

/// First-order TSK rule. Antecedents live in normalized input units.
struct Rule {
  Eigen::VectorXd centers;
  Eigen::VectorXd widths;
  Eigen::VectorXd coefficients;  // one per input
  double bias = 0.0;
  RuleOrigin origin = RuleOrigin::automatic;
  bool antecedent_frozen = false;

  std::size_t dim() const { return static_cast<std::size_t>(centers.size()); }
  double consequent(const Eigen::VectorXd& x) const { return coefficients.dot(x) + bias; }
};

enum class LossKind { huber, half_squared };

struct TrainingConfig {
  int epochs = 5000;
  double learning_rate = 0.01;
  double huber_delta = 1.0;
  double train_fraction = 0.70;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossKind loss = LossKind::huber;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);
};

struct TrainingHistory {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  double seconds = 0.0;
  bool diverged = false;
  std::string diagnostic;
};

struct ForwardResult {
  double y = 0.0;
  Eigen::VectorXd firing;
};

struct RuleContribution {
  std::size_t rule = 0;
  RuleOrigin origin = RuleOrigin::automatic;
  double strength = 0.0;
  double consequent = 0.0;      // normalized target units
  double consequent_raw = 0.0;  // target units
};

class AnfisModel : public Regressor {
 public:
  static constexpr double kMinWidth = 0.05;

  AnfisModel() = default;
  AnfisModel(std::vector<Rule> rules, Normalization norm, std::vector<std::string> features,
             std::string target);

  /// k-means derived rules plus frozen expert rules.
  static AnfisModel init_from_data(const Dataset& data, std::size_t n_rules,
                                   std::vector<Rule> expert_rules = {}, std::uint64_t seed = 42);

  ForwardResult forward(const Eigen::VectorXd& x) const;
  TrainingHistory train(const Dataset& data, const TrainingConfig& config);

  RegressorPrediction predict(std::span<const double> raw) const override;
  std::vector<RuleContribution> explain(std::span<const double> raw) const;

  // Flat parameter view: per rule centers, widths, coefficients, bias.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& p);
  /// Mean loss over normalized samples and its gradient w.r.t. parameters().
  double loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double delta,
              LossKind kind = LossKind::huber) const;
  double loss_and_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double delta,
                           LossKind kind, Eigen::VectorXd& grad) const;

  const std::vector<Rule>& rules() const { return rules_; }
  const Normalization& normalization() const { return norm_; }
  const TrainingHistory& history() const { return history_; }
  const TrainingConfig& config() const { return config_; }

  std::string kind() const override { return "anfis"; }
  bool explainable() const override { return true; }
  const std::vector<std::string>& features() const override { return features_; }
  const std::string& target() const override { return target_; }
  double train_seconds() const override { return history_.seconds; }
  nlohmann::json to_json() const override;
  static AnfisModel from_json(const nlohmann::json& doc);

 private:
  void check_rules() const;
  std::size_t dim() const { return norm_.inputs.size(); }

  std::vector<Rule> rules_;
  Normalization norm_;
  std::vector<std::string> features_;
  std::string target_;
  TrainingConfig config_;
  TrainingHistory history_;
};

}  // namespace ipaas::models
