#include "covert/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "covert/errors.hpp"

namespace covert::oracle {

ThresholdGridResult threshold_grid(const detection::DetectionContext& ctx, std::size_t points) {
  ctx.validate();
  if (points < 2) throw DomainError("threshold_grid: need at least two points");
  ThresholdGridResult r;
  r.lo = ctx.sigma_w2_bar / (2.0 * ctx.mu);
  r.hi = 2.0 * (ctx.received_power() + ctx.sigma_w2_bar * ctx.mu);
  r.step = (r.hi - r.lo) / static_cast<double>(points - 1);
  r.xi_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points; ++i) {
    const double tau = r.lo + r.step * static_cast<double>(i);
    const double xi = detection::total_error(tau, ctx);
    if (xi < r.xi_min) {
      r.xi_min = xi;
      r.tau_argmin = tau;
    }
  }
  return r;
}

ActionOptimum action_grid(const env::CovertEnv& e, const env::Scenario& sc, std::size_t power_points) {
  if (power_points < 100) throw DomainError("action_grid: need at least 100 power points");
  const auto& cfg = e.config();
  const double p_cov = detection::max_covert_power(cfg.sigma_w2_bar, cfg.mu, sc.channel.gain_w, cfg.epsilon);
  const double p_hi = std::min(cfg.P_max, p_cov * (1.0 - 1e-9));
  ActionOptimum best;
  best.latency = std::numeric_limits<double>::infinity();
  for (int m = 0; m < cfg.M(); ++m) {
    for (std::size_t k = 0; k < power_points; ++k) {
      const double P = p_hi * static_cast<double>(k) / static_cast<double>(power_points - 1);
      const auto info = e.evaluate_power(sc, m, P);
      if (info.feasible() && info.L_T < best.latency) {
        best = {true, m, P, info.L_T};
      }
    }
  }
  return best;
}

std::vector<env::Scenario> frozen_scenarios(const env::EnvConfig& cfg, std::uint64_t seed, std::size_t n) {
  env::CovertEnv e(cfg, Rng(seed).substream("evaluation").next_u64());
  std::vector<env::Scenario> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(e.draw_scenario());
  return out;
}

EvalSummary evaluate_policy(const gppo::PolicyParams& p, const env::CovertEnv& e,
                            std::span<const env::Scenario> scenarios) {
  if (scenarios.empty()) throw DomainError("evaluate_policy: no scenarios");
  const auto& cfg = e.config();
  EvalSummary s;
  s.n = scenarios.size();
  for (const auto& sc : scenarios) {
    const auto feat = env::features(e.observe(sc), cfg);
    const auto info = e.evaluate(sc, gppo::deterministic_action(p, feat));
    s.mean_latency += std::min(info.L_T, cfg.latency_cap);
    s.violation_rate += info.feasible() ? 0.0 : 1.0;
    s.mean_reward += info.reward();
    s.mean_fidelity += info.F_t;
    s.mean_xi += info.xi_star;
    s.per_state.push_back(info);
  }
  const double n = static_cast<double>(s.n);
  s.mean_latency /= n;
  s.violation_rate /= n;
  s.mean_reward /= n;
  s.mean_fidelity /= n;
  s.mean_xi /= n;
  return s;
}

GapReport compare_to_oracle(const gppo::PolicyParams& p, const env::CovertEnv& e,
                            std::span<const env::Scenario> scenarios, std::size_t power_points) {
  const auto policy = evaluate_policy(p, e, scenarios);
  const auto& cfg = e.config();
  GapReport g;
  g.n_states = scenarios.size();
  double viol = 0.0;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto opt = action_grid(e, scenarios[i], power_points);
    if (!opt.feasible) continue;
    const auto& info = policy.per_state[i];
    ++g.n_feasible;
    g.oracle_latency += opt.latency;
    g.policy_latency += std::min(info.L_T, cfg.latency_cap);
    viol += info.feasible() ? 0.0 : 1.0;
    if (info.feasible() && info.L_T < opt.latency * (1.0 - 1e-6)) ++g.oracle_beaten;
  }
  if (g.n_feasible > 0) {
    const double n = static_cast<double>(g.n_feasible);
    g.oracle_latency /= n;
    g.policy_latency /= n;
    g.violation_rate = viol / n;
    g.gap = g.policy_latency / g.oracle_latency - 1.0;
  }
  return g;
}

}  // namespace covert::oracle
