#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "covert/detection.hpp"
#include "covert/env.hpp"
#include "covert/gppo.hpp"

namespace covert::oracle {

struct ThresholdGridResult {
  double tau_argmin = 0.0;  ///< smallest minimiser on the grid
  double xi_min = 0.0;
  double step = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Brute-force minimum of total_error over `points` equally spaced
/// thresholds on [sigma^2/(2 mu), 2 (gain P + sigma^2 mu)].
ThresholdGridResult threshold_grid(const detection::DetectionContext& ctx, std::size_t points = 100000);

struct ActionOptimum {
  bool feasible = false;
  int m = -1;
  double P_t = 0.0;
  double latency = 0.0;
};

/// Exhaustive search over every compression level and `power_points`
/// equally spaced powers on [0, min(P_max, covert bound)].
ActionOptimum action_grid(const env::CovertEnv& e, const env::Scenario& sc, std::size_t power_points = 200);

/// Scenarios drawn from an independent stream, shared by every policy
/// evaluated with the same seed.
std::vector<env::Scenario> frozen_scenarios(const env::EnvConfig& cfg, std::uint64_t seed, std::size_t n);

struct EvalSummary {
  std::size_t n = 0;
  double mean_latency = 0.0;  ///< capped latency, all states
  double violation_rate = 0.0;
  double mean_reward = 0.0;
  double mean_fidelity = 0.0;
  double mean_xi = 0.0;
  std::vector<env::StepInfo> per_state;
};

/// Deterministic rollout (argmax level, mean power) on frozen scenarios.
EvalSummary evaluate_policy(const gppo::PolicyParams& p, const env::CovertEnv& e,
                            std::span<const env::Scenario> scenarios);

struct GapReport {
  std::size_t n_states = 0;
  std::size_t n_feasible = 0;          ///< states where the oracle found a feasible action
  double oracle_latency = 0.0;         ///< mean over feasible states
  double policy_latency = 0.0;         ///< mean over the same states
  double gap = 0.0;                    ///< policy / oracle - 1
  double violation_rate = 0.0;         ///< over the same states
  std::size_t oracle_beaten = 0;       ///< feasible policy actions faster than the oracle
};

GapReport compare_to_oracle(const gppo::PolicyParams& p, const env::CovertEnv& e,
                            std::span<const env::Scenario> scenarios, std::size_t power_points = 200);

}  // namespace covert::oracle
