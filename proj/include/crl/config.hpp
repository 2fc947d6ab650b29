#pragma once

// JSON experiment configuration: schema-validated, unknown keys rejected,
// hashed for reproducibility stamps.

#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "crl/trainer.hpp"

namespace crl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CliConfig {
  ExperimentConfig experiment;
  std::optional<GridSpec> grid;
  std::uint64_t hash = 0;
};

CliConfig parse_config(const nlohmann::json& doc);
CliConfig load_config_file(const std::string& path);

TaskSpec parse_task_spec(const nlohmann::json& j);
std::pair<ConstraintSpec, double> parse_constraint_spec(const nlohmann::json& j);

}  // namespace crl
