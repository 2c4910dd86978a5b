#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "covert/channel.hpp"
#include "covert/pcae.hpp"
#include "covert/rng.hpp"

namespace covert::env {

struct EnvConfig {
  channel::ChannelParams channel;
  double sigma_w2_bar = 1e-16;
  double mu = 2.0;

  std::vector<double> kappa_levels = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  double P_max = channel::dbm_to_watts(38.0);
  double F_min = 0.86;
  double R_min = 1.0;  ///< bit/s
  double epsilon = 0.05;
  double beta_r = 1.0;
  double beta_e = 1.0;
  double beta_f = 1.0;

  int episode_len = 100;
  std::int64_t L_min = 200;  ///< prompt length, uniform on [L_min, L_max]
  std::int64_t L_max = 2000;
  double S = 0.2;
  double T_proc = 1.0;
  std::size_t head = 15;
  std::size_t tail = 15;
  pcae::FidelityModel fidelity;

  /// Transmit power used to observe a scenario. Unset means the covert
  /// power bound at the mean warden gain.
  std::optional<double> probe_power;
  /// Latency stored in the state when the rate is zero.
  double latency_cap = 1e6;

  int M() const { return static_cast<int>(kappa_levels.size()); }
  double effective_probe_power() const;
  void validate() const;
};

/// Observation (L_T, R_b, F_t, xi*).
struct EnvState {
  double L_T = 0.0;
  double R_b = 0.0;
  double F_t = 0.0;
  double xi_star = 0.0;

  std::array<double, 4> as_array() const { return {L_T, R_b, F_t, xi_star}; }
  bool operator==(const EnvState&) const = default;
};

struct Action {
  int m = 0;
  double x_pow = 0.0;
  bool operator==(const Action&) const = default;
};

/// Physical outcome of one action on one scenario.
struct StepInfo {
  double kappa = 0.0;
  double L_prime = 0.0;
  double P_t = 0.0;
  double R_b = 0.0;
  double F_t = 0.0;
  double xi_star = 0.0;
  double L_T = 0.0;  ///< +inf when R_b == 0
  double Lambda = 0.0;
  bool rate_violated = false;
  bool covert_violated = false;
  bool fidelity_violated = false;

  bool feasible() const { return Lambda == 0.0; }
  double reward() const { return feasible() ? 1.0 / L_T : 0.0; }
};

struct Transition {
  int episode = 0;
  int step = 0;
  EnvState state;
  Action action;
  double reward = 0.0;
  EnvState next_state;
  StepInfo info;
  bool done = false;
};

/// Frozen randomness for one decision: both channels and the prompt.
struct Scenario {
  channel::ChannelRealization channel;
  std::int64_t L = 1;
  std::uint64_t prompt_seed = 0;  ///< synthetic prompt, used by token-level fidelity
};

struct GroupOutcome {
  double reward = 0.0;
  EnvState next_state;
  StepInfo info;
};

/// (P_max / 2)(tanh(x) + 1), evaluated as P_max * sigmoid(2x).
double map_power(double x_pow, double P_max);
/// Inverse of map_power for P in (0, P_max).
double inverse_map_power(double P_t, double P_max);

double penalty(double R_b, double xi_star, double F_t, const EnvConfig& cfg);

/// Fixed transform of the observation into network inputs.
std::array<double, 4> features(const EnvState& s, const EnvConfig& cfg);

/// The covert prompt-transmission MDP.
///
/// Each decision is made on a frozen Scenario. evaluate_group() scores any
/// number of candidate actions against it without side effects and draws
/// the following scenario; commit(g) then advances using candidate g.
class CovertEnv {
 public:
  CovertEnv(EnvConfig cfg, std::uint64_t seed);

  const EnvConfig& config() const { return cfg_; }

  EnvState reset();
  Transition step(const Action& a);
  std::vector<GroupOutcome> evaluate_group(std::span<const Action> actions);
  Transition commit(std::size_t g);

  const EnvState& state() const;
  const Scenario& scenario() const;
  int episode() const { return episode_; }
  int step_index() const { return step_; }

  Scenario draw_scenario();
  StepInfo evaluate(const Scenario& sc, const Action& a) const;
  StepInfo evaluate_power(const Scenario& sc, int m, double P_t) const;
  /// State reported for a scenario: the outcome of the probe action
  /// (m = M - 1 at the probe power).
  EnvState observe(const Scenario& sc) const;

  /// Fidelity of compression level m on the scenario's prompt.
  double fidelity_at(const Scenario& sc, int m) const;

 private:
  EnvConfig cfg_;
  Rng channel_rng_;
  Rng prompt_rng_;
  bool started_ = false;
  Scenario current_;
  EnvState state_;
  int episode_ = -1;
  int step_ = 0;

  std::optional<Scenario> next_;
  EnvState next_state_;
  std::vector<Action> pending_actions_;
  std::vector<GroupOutcome> pending_;

  mutable std::map<std::pair<std::uint64_t, int>, double> fidelity_cache_;
};

/// State recorded for an outcome; latency is capped when the rate is zero.
EnvState state_from(const StepInfo& info, const EnvConfig& cfg);

void write_transitions_csv(std::ostream& out, std::span<const Transition> rows);

}  // namespace covert::env
