#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipaas/models/anfis.hpp"
#include "ipaas/sim/dryer.hpp"

namespace ipaas::cli {

/// Invalid configuration or usage; maps to exit status 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Config {
  std::filesystem::path store = "data/cycles.jsonl";
  std::filesystem::path models = "models";
  std::optional<std::filesystem::path> routes;
  std::optional<std::filesystem::path> process;
  double gas_budget_factor = 1.10;
  int max_retries = 3;
  double retry_temperature_bias = 2.0;  // degrees removed per retry
  std::size_t rules = 16;
  models::TrainingConfig training;
  sim::PhysicsConstants physics;
  std::uint64_t seed = 7;

  void validate() const;
  /// Keys absent from `j` keep their defaults.
  static Config from_json(const nlohmann::json& j);
  static Config load(const std::filesystem::path& path);
};

/// Entry point behind the `ipaas` executable. `args` excludes the program
/// name. Returns 0 on success, 1 on a runtime failure, 2 on a usage or
/// configuration error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ipaas::cli
