#include "covert/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "covert/detection.hpp"
#include "covert/errors.hpp"

namespace covert::env {

namespace {

constexpr std::int64_t kSyntheticVocab = 1000;

double hinge(double x) { return x > 0.0 ? x : 0.0; }

// Zipf-like synthetic prompt and matching corpus counts for token-level
// fidelity.
std::vector<double> synthetic_counts() {
  std::vector<double> c(kSyntheticVocab);
  for (std::int64_t v = 0; v < kSyntheticVocab; ++v) c[v] = 1e5 / static_cast<double>(v + 1);
  return c;
}

pcae::TokenSequence synthetic_prompt(std::int64_t L, std::uint64_t seed) {
  static const std::vector<double> cdf = [] {
    auto c = synthetic_counts();
    std::partial_sum(c.begin(), c.end(), c.begin());
    for (auto& x : c) x /= c.back();
    return c;
  }();
  Rng rng(seed);
  pcae::TokenSequence seq{std::vector<pcae::TokenId>(static_cast<std::size_t>(L)), kSyntheticVocab};
  for (auto& id : seq.ids) {
    const double u = rng.uniform();
    id = std::min<std::int64_t>(kSyntheticVocab - 1, std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
  }
  return seq;
}

}  // namespace

double EnvConfig::effective_probe_power() const {
  if (probe_power) return *probe_power;
  return detection::max_covert_power(sigma_w2_bar, mu, channel::path_gain(channel.g0, channel.d_w), epsilon);
}

void EnvConfig::validate() const {
  channel.validate();
  if (!(sigma_w2_bar > 0)) throw ConfigError("env: sigma_w2_bar must be > 0");
  if (!(mu > 1)) throw ConfigError("env: mu must be > 1");
  if (kappa_levels.empty()) throw ConfigError("env: need at least one compression level");
  for (std::size_t i = 0; i < kappa_levels.size(); ++i) {
    if (!(kappa_levels[i] > 0 && kappa_levels[i] <= 1)) throw ConfigError("env: compression levels must lie in (0, 1]");
    if (i > 0 && !(kappa_levels[i] > kappa_levels[i - 1])) {
      throw ConfigError("env: compression levels must be strictly increasing");
    }
  }
  if (!(P_max > 0)) throw ConfigError("env: P_max must be > 0");
  if (!(F_min > 0) || !(R_min > 0)) throw ConfigError("env: F_min and R_min must be > 0");
  if (!(epsilon > 0 && epsilon < 1)) throw ConfigError("env: epsilon must be in (0, 1)");
  if (!(beta_r >= 0 && beta_e >= 0 && beta_f >= 0) || !(beta_r + beta_e + beta_f > 0)) {
    throw ConfigError("env: penalty weights must be >= 0 with a positive sum");
  }
  if (episode_len < 1) throw ConfigError("env: episode length must be >= 1");
  if (L_min < 1 || L_max < L_min) throw ConfigError("env: need 1 <= L_min <= L_max");
  if (!(S > 0)) throw ConfigError("env: S must be > 0");
  if (!(T_proc >= 0)) throw ConfigError("env: T_proc must be >= 0");
  if (probe_power && !(*probe_power > 0)) throw ConfigError("env: probe power must be > 0");
  if (!(latency_cap > 0)) throw ConfigError("env: latency cap must be > 0");
  fidelity.validate();
}

double map_power(double x_pow, double P_max) {
  if (!(P_max > 0)) throw DomainError("map_power: P_max must be > 0");
  return P_max / (1.0 + std::exp(-2.0 * x_pow));
}

double inverse_map_power(double P_t, double P_max) {
  if (!(P_t > 0 && P_t < P_max)) throw DomainError("inverse_map_power: need 0 < P_t < P_max");
  return 0.5 * std::log(P_t / (P_max - P_t));
}

double penalty(double R_b, double xi_star, double F_t, const EnvConfig& cfg) {
  const double num = cfg.beta_r * hinge(cfg.R_min - R_b) + cfg.beta_e * hinge(1.0 - cfg.epsilon - xi_star) +
                     cfg.beta_f * hinge(cfg.F_min - F_t);
  return num / (cfg.beta_r + cfg.beta_e + cfg.beta_f);
}

std::array<double, 4> features(const EnvState& s, const EnvConfig& cfg) {
  const double L_T = std::max(s.L_T, 1e-12);
  const double R = std::max(s.R_b, 1e-300);
  return {std::log10(L_T), std::log10(R / cfg.R_min) / 2.0, s.F_t,
          -std::log10(std::max(1.0 - s.xi_star, 1e-12)) / 2.0};
}

EnvState state_from(const StepInfo& info, const EnvConfig& cfg) {
  return {std::min(info.L_T, cfg.latency_cap), info.R_b, info.F_t, info.xi_star};
}

CovertEnv::CovertEnv(EnvConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), channel_rng_(Rng(seed).substream("channel")), prompt_rng_(Rng(seed).substream("prompt")) {
  cfg_.validate();
}

Scenario CovertEnv::draw_scenario() {
  Scenario sc;
  sc.channel = channel::draw_realization(cfg_.channel, channel_rng_);
  sc.L = prompt_rng_.uniform_int(cfg_.L_min, cfg_.L_max);
  sc.prompt_seed = prompt_rng_.next_u64();
  return sc;
}

double CovertEnv::fidelity_at(const Scenario& sc, int m) const {
  const double kappa = cfg_.kappa_levels.at(static_cast<std::size_t>(m));
  const std::size_t L_prime = pcae::compressed_length(static_cast<std::size_t>(sc.L), kappa);
  if (cfg_.fidelity.kind == pcae::FidelityKind::Analytic) {
    return pcae::analytic_fidelity(static_cast<double>(L_prime) / static_cast<double>(sc.L), cfg_.fidelity);
  }
  const auto key = std::make_pair(sc.prompt_seed, m);
  if (auto it = fidelity_cache_.find(key); it != fidelity_cache_.end()) return it->second;
  static const std::vector<double> counts = synthetic_counts();
  const auto prompt = synthetic_prompt(sc.L, sc.prompt_seed);
  const auto scores = pcae::score_unigram(prompt, counts);
  const auto compressed = pcae::compress(prompt, scores, {kappa, cfg_.head, cfg_.tail});
  const double f = pcae::fidelity(prompt, compressed, cfg_.fidelity);
  if (fidelity_cache_.size() > 100000) fidelity_cache_.clear();
  fidelity_cache_.emplace(key, f);
  return f;
}

StepInfo CovertEnv::evaluate_power(const Scenario& sc, int m, double P_t) const {
  if (m < 0 || m >= cfg_.M()) throw DomainError("action: compression index out of range");
  StepInfo info;
  info.kappa = cfg_.kappa_levels[static_cast<std::size_t>(m)];
  info.L_prime = static_cast<double>(pcae::compressed_length(static_cast<std::size_t>(sc.L), info.kappa));
  info.P_t = P_t;
  info.R_b = channel::rate_bob(cfg_.channel.B, channel::snr_bob(sc.channel.gain_b, P_t, cfg_.channel.sigma_b2));
  info.xi_star = detection::min_total_error({cfg_.sigma_w2_bar, cfg_.mu, sc.channel.gain_w, P_t});
  info.F_t = fidelity_at(sc, m);
  info.L_T = info.R_b > 0 ? channel::total_latency({info.L_prime, cfg_.S, info.R_b, cfg_.T_proc})
                          : std::numeric_limits<double>::infinity();
  info.Lambda = penalty(info.R_b, info.xi_star, info.F_t, cfg_);
  info.rate_violated = info.R_b < cfg_.R_min;
  info.covert_violated = info.xi_star < 1.0 - cfg_.epsilon;
  info.fidelity_violated = info.F_t < cfg_.F_min;
  return info;
}

StepInfo CovertEnv::evaluate(const Scenario& sc, const Action& a) const {
  if (!std::isfinite(a.x_pow)) throw DomainError("action: power pre-activation must be finite");
  return evaluate_power(sc, a.m, map_power(a.x_pow, cfg_.P_max));
}

EnvState CovertEnv::observe(const Scenario& sc) const {
  return state_from(evaluate_power(sc, cfg_.M() - 1, cfg_.effective_probe_power()), cfg_);
}

EnvState CovertEnv::reset() {
  current_ = draw_scenario();
  state_ = observe(current_);
  started_ = true;
  ++episode_;
  step_ = 0;
  next_.reset();
  pending_.clear();
  pending_actions_.clear();
  return state_;
}

const EnvState& CovertEnv::state() const {
  if (!started_) throw StateError("environment has not been reset");
  return state_;
}

const Scenario& CovertEnv::scenario() const {
  if (!started_) throw StateError("environment has not been reset");
  return current_;
}

std::vector<GroupOutcome> CovertEnv::evaluate_group(std::span<const Action> actions) {
  if (!started_) throw StateError("environment has not been reset");
  if (actions.empty()) throw DomainError("evaluate_group: need at least one action");
  if (!next_) {
    next_ = draw_scenario();
    next_state_ = observe(*next_);
  }
  pending_.clear();
  pending_actions_.assign(actions.begin(), actions.end());
  for (const auto& a : actions) {
    GroupOutcome o;
    o.info = evaluate(current_, a);
    o.reward = o.info.reward();
    o.next_state = next_state_;
    pending_.push_back(o);
  }
  return pending_;
}

Transition CovertEnv::commit(std::size_t g) {
  if (pending_.empty()) throw StateError("commit called without a preceding evaluate_group");
  if (g >= pending_.size()) throw DomainError("commit: group index out of range");
  Transition t;
  t.episode = episode_;
  t.step = step_;
  t.state = state_;
  t.action = pending_actions_[g];
  t.reward = pending_[g].reward;
  t.next_state = next_state_;
  t.info = pending_[g].info;
  t.done = step_ + 1 >= cfg_.episode_len;

  current_ = *next_;
  state_ = next_state_;
  next_.reset();
  pending_.clear();
  pending_actions_.clear();
  if (t.done) {
    ++episode_;
    step_ = 0;
  } else {
    ++step_;
  }
  return t;
}

Transition CovertEnv::step(const Action& a) {
  evaluate_group(std::span<const Action>(&a, 1));
  return commit(0);
}

void write_transitions_csv(std::ostream& out, std::span<const Transition> rows) {
  out << "episode,step,m,kappa,P_t,R_b,F_t,xi_star,L_T,Lambda,reward\n";
  char buf[512];
  for (const auto& t : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", t.episode, t.step,
                  t.action.m, t.info.kappa, t.info.P_t, t.info.R_b, t.info.F_t, t.info.xi_star, t.info.L_T,
                  t.info.Lambda, t.reward);
    out << buf;
  }
}

}  // namespace covert::env
