#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "agb/training.hpp"

namespace agb {

inline constexpr int kConfigVersion = 1;

/// Simulated dataset parameters.
struct DataConfig {
  std::size_t count = 256;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t n_coils = 4;
  double acceleration = 4.0;
  std::size_t center_lines = 4;
  std::size_t n_ellipses = 6;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Every tunable of a run. Image size and coil count live in `data` and are
/// copied into the network configs by resolve().
struct ExperimentConfig {
  DataConfig data;
  TrainConfig train;

  // Propagates the data dims into train.generator / train.critic.
  void resolve();
  void validate() const;
};

/// Flat key/value form. Unknown keys are rejected and values are range-checked.
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Layers string overrides (as given on a command line) on top of a config.
/// Values are parsed according to the type of the key's default.
ExperimentConfig apply_overrides(const ExperimentConfig& base, const std::map<std::string, std::string>& overrides);

/// Every accepted key.
std::vector<std::string> config_keys();

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace agb
