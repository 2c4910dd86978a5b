#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "covert/config.hpp"
#include "covert/gppo.hpp"

namespace covert::sweep {

enum class Family { FidelityThreshold, Covertness, MuPmax };

Family family_from_name(const std::string& name);
std::string family_name(Family f);

struct SweepSpec {
  Family family = Family::FidelityThreshold;
  std::vector<double> values;   ///< F_min, 1 - epsilon, or mu
  std::vector<double> values2;  ///< P_max in dBm (MuPmax only)
  std::vector<gppo::Variant> variants = {gppo::Variant::GPPO, gppo::Variant::GRPO, gppo::Variant::PPO};
  std::vector<std::uint64_t> seeds;

  /// Default grid for each family.
  static SweepSpec defaults(Family f);
};

struct SweepRow {
  double value = 0.0;
  std::optional<double> value2;
  gppo::Variant variant = gppo::Variant::GPPO;
  std::uint64_t seed = 0;
  bool missing = false;
  std::string error;  ///< why a missing run failed
  double mean_latency = 0.0;
  double latency_amplitude = 0.0;
  double violation_rate = 0.0;
  double mean_reward = 0.0;
};

/// Config for one sweep point.
config::ExperimentConfig point_config(const config::ExperimentConfig& base, Family f, double v, double v2);

/// Trains and evaluates one (point, variant, seed). Latency and violation
/// rate come from deterministic evaluation on frozen states; the amplitude is
/// (max - min) / mean of the training latency over the last tenth of
/// iterations.
SweepRow run_point(const config::ExperimentConfig& base, Family f, double v, double v2, gppo::Variant variant,
                   std::uint64_t seed);

using Progress = std::function<void(const SweepRow&)>;

/// Runs every point. A run that throws is recorded as a missing row.
std::vector<SweepRow> run_sweep(const config::ExperimentConfig& base, const SweepSpec& spec,
                                const Progress& progress = {});

/// Columns: sweep_value[,sweep_value2],variant,seed,mean_latency,
/// latency_amplitude,violation_rate. Missing runs print NA.
void write_sweep_csv(std::ostream& out, Family f, const std::vector<SweepRow>& rows);

/// Seed-averaged mean latency per (variant, value, value2), skipping missing rows.
struct CellMean {
  gppo::Variant variant;
  double value;
  std::optional<double> value2;
  double mean_latency;
  std::size_t runs;
};
std::vector<CellMean> seed_average(const std::vector<SweepRow>& rows);

}  // namespace covert::sweep
