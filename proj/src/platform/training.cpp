#include "ipaas/platform/training.hpp"

namespace ipaas::platform {

std::vector<std::string> features_for(const std::string& target) {
  std::vector<std::string> f{"target_humidity", "input_humidity", "weight"};
  if (target == kGasTarget) f.emplace_back("temperature");
  return f;
}

std::vector<double> feature_row(const sim::CycleInputs& in, std::optional<double> temperature) {
  std::vector<double> row{in.target_humidity, in.input_humidity, in.weight};
  if (temperature) row.push_back(*temperature);
  return row;
}

models::Dataset build_dataset(std::span<const store::CycleRecord> records, const std::string& target) {
  if (target != kTimeTarget && target != kTemperatureTarget && target != kGasTarget) {
    throw models::ModelError("unknown training target '" + target + "'");
  }
  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  for (const auto& r : records) {
    if (r.status != store::CycleStatus::completed || !r.outcome || !r.setpoints) continue;
    const bool with_temperature = target == kGasTarget;
    rows.push_back(feature_row(r.inputs, with_temperature ? std::optional(r.setpoints->temperature)
                                                          : std::nullopt));
    if (target == kTimeTarget) {
      ys.push_back(r.outcome->extraction_time);
    } else if (target == kTemperatureTarget) {
      ys.push_back(r.setpoints->temperature);
    } else {
      ys.push_back(r.outcome->gas_consumed);
    }
  }
  if (rows.empty()) throw models::ModelError("no completed cycles to train on");

  models::Dataset d;
  d.features = features_for(target);
  d.target = target;
  d.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d.features.size()));
  d.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    d.y(static_cast<Eigen::Index>(i)) = ys[i];
  }
  return d;
}

TrainedModel train_model(const std::string& kind, const models::Dataset& data, const ModelOptions& options) {
  const auto split = metrics::train_test_split(data.rows(), options.anfis.train_fraction, options.anfis.seed);
  const models::Dataset test = data.subset(split.test);

  TrainedModel out;
  if (kind == "anfis") {
    auto m = models::AnfisModel::init_from_data(data, options.n_rules, {}, options.anfis.seed);
    out.history = m.train(data, options.anfis);
    out.model = std::make_unique<models::AnfisModel>(std::move(m));
  } else if (kind == "gpr") {
    out.tuning = models::tune(data, options.grid, options.anfis.train_fraction, options.anfis.seed);
    out.model = std::make_unique<models::GprModel>(
        models::GprModel::fit(data.subset(split.train), out.tuning->best));
  } else {
    throw models::ModelError("unknown model kind '" + kind + "' (expected anfis or gpr)");
  }
  const std::vector<double> actual(test.y.data(), test.y.data() + test.y.size());
  out.holdout = metrics::regression_metrics(actual, out.model->predict_all(test.X));
  return out;
}

ModelSuite train_suite(const std::string& kind, std::span<const store::CycleRecord> records,
                       const ModelOptions& options) {
  ModelSuite s;
  s.kind = kind;
  s.time = train_model(kind, build_dataset(records, kTimeTarget), options).model;
  s.temperature = train_model(kind, build_dataset(records, kTemperatureTarget), options).model;
  s.gas = train_model(kind, build_dataset(records, kGasTarget), options).model;
  return s;
}

std::filesystem::path model_path(const std::filesystem::path& dir, const std::string& kind,
                                 const std::string& target) {
  return dir / (kind + "-" + target + ".json");
}

void save_suite(const ModelSuite& suite, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  suite.time->save(model_path(dir, suite.kind, kTimeTarget).string());
  suite.temperature->save(model_path(dir, suite.kind, kTemperatureTarget).string());
  suite.gas->save(model_path(dir, suite.kind, kGasTarget).string());
}

ModelSuite load_suite(const std::filesystem::path& dir, const std::string& kind) {
  ModelSuite s;
  s.kind = kind;
  auto load = [&](const char* target) -> std::shared_ptr<const models::Regressor> {
    const auto path = model_path(dir, kind, target);
    if (!std::filesystem::exists(path)) throw models::ModelError("missing model file " + path.string());
    auto m = models::load_regressor(path.string());
    if (m->kind() != kind || m->target() != target) {
      throw models::ModelError(path.string() + " does not hold a " + kind + " model for " + target);
    }
    return m;
  };
  s.time = load(kTimeTarget);
  s.temperature = load(kTemperatureTarget);
  s.gas = load(kGasTarget);
  return s;
}

}  // namespace ipaas::platform
