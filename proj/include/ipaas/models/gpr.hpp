#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ipaas/models/dataset.hpp"

namespace ipaas::models {

struct GprHyper {
  double signal_std = 1.0;    // sigma_f
  double length_scale = 1.0;  // l
  double noise_std = 0.1;     // sigma_n

  void validate() const;
  bool operator==(const GprHyper&) const = default;
  nlohmann::json to_json() const;
  static GprHyper from_json(const nlohmann::json& j);
};

/// sigma_f^2 * exp(-|a - b| / l), Euclidean distance.
double exponential_kernel(std::span<const double> a, std::span<const double> b, const GprHyper& h);

struct GprPrediction {
  double mean = 0.0;
  double std = 0.0;
};

class GprModel : public Regressor {
 public:
  static constexpr double kJitter = 1e-10;
  /// Factorizations whose smallest squared pivot falls below this fraction of
  /// the largest diagonal entry are refused as numerically singular.
  static constexpr double kPivotFloor = 1e-9;

  GprModel() = default;

  static GprModel fit(const Dataset& data, const GprHyper& hyper);

  GprPrediction predict_with_std(std::span<const double> raw) const;
  RegressorPrediction predict(std::span<const double> raw) const override;

  /// Latent variance in normalized target units.
  double normalized_variance(const Eigen::VectorXd& x_norm) const;

  const GprHyper& hyper() const { return hyper_; }
  const Eigen::MatrixXd& train_inputs() const { return X_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  const Eigen::MatrixXd& cholesky() const { return L_; }
  const Normalization& normalization() const { return norm_; }
  double y_mean() const { return y_mean_; }
  double y_scale() const { return y_scale_; }
  Eigen::MatrixXd gram() const;

  std::string kind() const override { return "gpr"; }
  bool explainable() const override { return false; }
  const std::vector<std::string>& features() const override { return features_; }
  const std::string& target() const override { return target_; }
  double train_seconds() const override { return seconds_; }
  nlohmann::json to_json() const override;
  static GprModel from_json(const nlohmann::json& doc);

 private:
  void factorize();

  GprHyper hyper_;
  Normalization norm_;
  Eigen::MatrixXd X_;  // normalized training inputs
  Eigen::VectorXd z_;  // standardized targets
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  Eigen::MatrixXd L_;
  Eigen::VectorXd alpha_;
  std::vector<std::string> features_;
  std::string target_;
  double seconds_ = 0.0;
};

struct TuneResult {
  GprHyper best;
  double best_r2 = 0.0;
  std::vector<std::pair<GprHyper, double>> scores;  // grid order; failed fits omitted
};

std::vector<GprHyper> default_grid();

/// Grid search maximizing held-out R^2 on the seeded split. Ties keep the
/// earliest grid point.
TuneResult tune(const Dataset& data, const std::vector<GprHyper>& grid, double train_fraction,
                std::uint64_t seed);

}  // namespace ipaas::models
