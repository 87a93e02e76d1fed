#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace ipaas::models {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major samples (one row per cycle) with a single regression target.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> features;
  std::string target;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(X.cols()); }
  Dataset subset(std::span<const std::size_t> rows) const;
  void check() const;
};

struct FeatureRange {
  double min = 0.0;
  double max = 1.0;

  /// Width used for scaling; 1 for a constant feature.
  double scale() const { return max > min ? max - min : 1.0; }
};

/// Min-max scaling of inputs to [0, 1] and of the target.
struct Normalization {
  std::vector<FeatureRange> inputs;
  FeatureRange target;

  /// Throws ModelError on a constant input feature unless allowed.
  static Normalization fit(const Dataset& data, bool allow_constant_inputs);

  Eigen::VectorXd normalize_input(std::span<const double> raw) const;
  Eigen::MatrixXd normalize_inputs(const Eigen::MatrixXd& raw) const;
  double normalize_target(double raw) const { return (raw - target.min) / target.scale(); }
  double denormalize_target(double value) const { return value * target.scale() + target.min; }
  /// True when a feature lies outside [min - range/2, max + range/2].
  bool out_of_domain(std::span<const double> raw) const;

  nlohmann::json to_json() const;
  static Normalization from_json(const nlohmann::json& j);
};

struct RegressorPrediction {
  double value = 0.0;
  std::optional<double> std;  // posterior std where the model provides one
  bool out_of_domain = false;
};

/// Common surface of the decision models so callers can address either one
/// by name.
class Regressor {
 public:
  virtual ~Regressor() = default;

  virtual std::string kind() const = 0;
  virtual bool explainable() const = 0;
  virtual RegressorPrediction predict(std::span<const double> raw) const = 0;
  virtual const std::vector<std::string>& features() const = 0;
  virtual const std::string& target() const = 0;
  virtual double train_seconds() const = 0;
  virtual nlohmann::json to_json() const = 0;

  std::vector<double> predict_all(const Eigen::MatrixXd& raw) const;
  void save(const std::string& path) const;
};

std::unique_ptr<Regressor> regressor_from_json(const nlohmann::json& doc);
std::unique_ptr<Regressor> load_regressor(const std::string& path);

}  // namespace ipaas::models
