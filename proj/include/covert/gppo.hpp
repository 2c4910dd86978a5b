#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "covert/env.hpp"
#include "covert/nn.hpp"
#include "covert/rng.hpp"

namespace covert::gppo {

using Features = std::array<double, 4>;
using env::Action;

enum class Variant { GPPO, PPO, GRPO };

Variant variant_from_name(const std::string& name);
std::string variant_name(Variant v);

struct HyperParams {
  int G = 5;
  double eps_clip = 0.2;
  double beta_kl = 0.1;
  double gamma = 0.0;
  double lam = 0.97;
  double lr = 3e-4;
  double lr_decay = 0.99;
  long long total_steps = 500000;  ///< committed environment steps
  int rollout = 2048;
  int minibatch = 256;
  int epochs = 4;
  int hidden = 256;
  int hidden_layers = 2;
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
  double max_grad_norm = 0.0;
  double log_std_min = -2.5;
  double log_std_max = 2.0;
  double target_kl = 0.05;  ///< stop an iteration's actor epochs once the sample KL exceeds 1.5x this; 0 disables

  int iterations() const { return static_cast<int>((total_steps + rollout - 1) / rollout); }
  void validate() const;
};

/// Actor: features -> [M logits | power mean | power log-std].
/// Critic: features -> V(s).
struct PolicyParams {
  int M = 0;
  nn::Mlp actor;
  nn::Mlp critic;
  nn::VectorXd theta;
  nn::VectorXd lambda;
  double log_std_min = -2.5;
  double log_std_max = 2.0;

  /// Uniform fan-in initialisation; the power-mean bias starts at `x_init`
  /// and the log-std bias at zero standard deviation in log space.
  static PolicyParams create(int M, const HyperParams& hp, double x_init, Rng& rng);
};

struct PolicyOutput {
  std::vector<double> logits;
  double mean = 0.0;
  double log_std = 0.0;  ///< squashed into [log_std_min, log_std_max]
};

/// Smooth squash of the raw network output into [lo, hi]:
/// lo + (hi - lo) (tanh(raw) + 1) / 2. Never saturates the gradient exactly.
double squash_log_std(double raw, double lo, double hi);
double unsquash_log_std(double log_std, double lo, double hi);

struct ActionSample {
  Action action;
  double log_prob = 0.0;
};

PolicyOutput policy_output(const PolicyParams& p, const Features& s);
double log_prob(const PolicyOutput& out, const Action& a);
std::vector<ActionSample> sample_group(const PolicyParams& p, const Features& s, int G, Rng& rng);
/// argmax level and mean power.
Action deterministic_action(const PolicyParams& p, const Features& s);
double value(const PolicyParams& p, const Features& s);
/// Probability of level m under the categorical head.
double level_probability(const PolicyParams& p, const Features& s, int m);

// -- estimators ------------------------------------------------------------

double td_error(double r, double v_next, double v, double gamma);
/// sum_l (gamma lam)^l deltas[l]
double gae(std::span<const double> deltas, double gamma, double lam);
/// Population-std standardisation; all zeros when std < 1e-8.
std::vector<double> normalize_group(std::span<const double> a);
std::size_t select_best(std::span<const double> rewards);

struct LossValue {
  double loss = 0.0;
  double grad = 0.0;  ///< d loss / d (first argument)
};

/// -[min(rho A, clip(rho, 1-eps, 1+eps) A) - beta (lp_new - lp_old)]
LossValue actor_loss(double log_prob_new, double log_prob_old, double adv, double eps_clip, double beta_kl);
/// (v_pred - v_target)^2
LossValue critic_loss(double v_pred, double v_target);

struct Sample {
  Features s;
  Action a;
  double log_prob_old = 0.0;
  double adv = 0.0;
  double v_target = 0.0;
};

/// Mean actor loss over a batch; adds d/dtheta into `grad` when non-null.
/// `kl` receives the mean of (rho - 1) - log rho, a nonnegative estimate of
/// the divergence from the sampling policy.
double actor_batch_loss(const PolicyParams& p, const nn::VectorXd& theta, std::span<const Sample> batch,
                        double eps_clip, double beta_kl, nn::VectorXd* grad, double* kl = nullptr);
/// Mean critic loss over a batch; adds d/dlambda into `grad` when non-null.
double critic_batch_loss(const PolicyParams& p, const nn::VectorXd& lambda, std::span<const Sample> batch,
                         nn::VectorXd* grad);

// -- environments ----------------------------------------------------------

struct Outcome {
  double reward = 0.0;
  Features next;
  double latency = 0.0;
  double fidelity = 0.0;
  double xi = 0.0;
  bool violated = false;
};

/// What the trainer needs from an environment.
class TrainingEnv {
 public:
  virtual ~TrainingEnv() = default;
  virtual int num_levels() const = 0;
  /// Initial power pre-activation for the actor's mean head.
  virtual double initial_power_mean() const { return 0.0; }
  virtual Features reset() = 0;
  virtual std::vector<Outcome> evaluate_group(std::span<const Action> actions) = 0;
  /// Returns true when the committed step ended an episode.
  virtual bool commit(std::size_t g) = 0;
};

class CovertTrainingEnv : public TrainingEnv {
 public:
  CovertTrainingEnv(env::EnvConfig cfg, std::uint64_t seed);

  int num_levels() const override { return env_.config().M(); }
  double initial_power_mean() const override;
  Features reset() override;
  std::vector<Outcome> evaluate_group(std::span<const Action> actions) override;
  bool commit(std::size_t g) override;

  env::CovertEnv& env() { return env_; }
  const std::vector<env::Transition>& transitions() const { return log_; }
  void keep_transitions(bool on) { keep_ = on; }

 private:
  env::CovertEnv env_;
  bool keep_ = false;
  std::vector<env::Transition> log_;
};

// -- training --------------------------------------------------------------

struct CurvePoint {
  int iteration = 0;
  double reward_mean = 0.0;
  double latency_mean = 0.0;
  double fidelity_mean = 0.0;
  double xi_mean = 0.0;
  double violation_rate = 0.0;
  double lr = 0.0;
  bool operator==(const CurvePoint&) const = default;
};

struct TrainState {
  Variant variant = Variant::GPPO;
  HyperParams hp;
  PolicyParams policy;
  nn::Optimizer actor_opt;
  nn::Optimizer critic_opt;
  Rng sample_rng;
  Rng shuffle_rng;
  int iteration = 0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  TrainState state;
};

/// Hyperparameters actually used by a variant: PPO forces G = 1 and
/// beta = 0, GRPO forces beta = 0.
HyperParams effective_hyper(const HyperParams& hp, Variant v);

TrainState init_training(TrainingEnv& env, const HyperParams& hp, Variant v, std::uint64_t seed);
/// Runs the remaining iterations of `state` and returns the learning curve.
TrainResult train(TrainingEnv& env, const HyperParams& hp, Variant v, std::uint64_t seed);
std::vector<CurvePoint> resume(TrainingEnv& env, TrainState& state, int iterations);

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve);

/// Versioned binary checkpoint: "COVCKPT" magic, JSON header, raw doubles.
void save_checkpoint(const std::string& path, const TrainState& state, const std::string& metadata_json = "{}");
TrainState load_checkpoint(const std::string& path);

}  // namespace covert::gppo
