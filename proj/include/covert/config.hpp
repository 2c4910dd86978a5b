#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "covert/env.hpp"
#include "covert/gppo.hpp"

namespace covert::config {

/// Every tunable of an experiment. Serialised as one flat JSON object with
/// dotted keys (channel.g0, env.F_min, gppo.G, ...).
struct ExperimentConfig {
  env::EnvConfig env;
  gppo::HyperParams gppo;

  double kappa = 0.6;  ///< compression ratio used by the compress subcommand
  std::int64_t r_min = 1;
  std::int64_t r_max = 10;

  std::vector<std::uint64_t> seeds = {7};
  std::string output_dir = "out";
  std::string scorer = "builtin";  ///< "builtin" or a scorer command line
  std::string variant = "gppo";
  std::size_t eval_states = 500;
  std::size_t oracle_power_points = 200;

  void validate() const;
};

/// Canonical text: keys in a fixed order, one per line.
std::string serialize(const ExperimentConfig& c);
ExperimentConfig parse(std::string_view text);
ExperimentConfig load(const std::string& path);
void save(const std::string& path, const ExperimentConfig& c);

/// Applies one "key=value" override. The value is read as JSON when
/// possible, otherwise as a string. Unknown keys are a ConfigError.
void apply_override(ExperimentConfig& c, std::string_view assignment);

std::vector<std::string> known_keys();

}  // namespace covert::config
