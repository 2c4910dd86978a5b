#include "covert/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "covert/errors.hpp"

namespace covert::detection {
namespace {

constexpr double kRoundingSlack = 1e-12;

double clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

// Middle-band expressions shared by the component functions and the
// five-branch sum so that total_error == P_FA + P_MD bit-for-bit.
double fa_middle(double tau, const DetectionContext& c) {
  return std::log(c.sigma_w2_bar * c.mu / tau) / (2.0 * std::log(c.mu));
}

double md_middle(double tau, const DetectionContext& c) {
  return std::log(c.mu * (tau - c.received_power()) / c.sigma_w2_bar) / (2.0 * std::log(c.mu));
}

void check_tau(double tau) {
  if (!(tau >= 0)) throw DomainError("detection: threshold must be >= 0");
}

}  // namespace

void DetectionContext::validate() const {
  if (!(mu > 1)) throw DomainError("detection: uncertainty factor mu must be > 1");
  if (!(sigma_w2_bar > 0)) throw DomainError("detection: nominal noise power must be > 0");
  if (!(gain_w >= 0)) throw DomainError("detection: gain must be >= 0");
  if (!(P_t >= 0)) throw DomainError("detection: power must be >= 0");
}

double false_alarm_prob(double tau, const DetectionContext& ctx) {
  ctx.validate();
  check_tau(tau);
  if (tau <= ctx.sigma_w2_bar / ctx.mu) return 1.0;
  if (tau >= ctx.sigma_w2_bar * ctx.mu) return 0.0;
  return clamp01(fa_middle(tau, ctx));
}

double missed_detection_prob(double tau, const DetectionContext& ctx) {
  ctx.validate();
  check_tau(tau);
  const double rx = ctx.received_power();
  if (tau <= rx + ctx.sigma_w2_bar / ctx.mu) return 0.0;
  if (tau >= rx + ctx.sigma_w2_bar * ctx.mu) return 1.0;
  return clamp01(md_middle(tau, ctx));
}

double total_error(double tau, const DetectionContext& ctx) {
  ctx.validate();
  check_tau(tau);
  const double rx = ctx.received_power();
  const double lo0 = ctx.sigma_w2_bar / ctx.mu;
  const double hi0 = ctx.sigma_w2_bar * ctx.mu;
  const double lo1 = rx + lo0;
  const double hi1 = rx + hi0;
  if (lo1 > hi0) {
    return false_alarm_prob(tau, ctx) + missed_detection_prob(tau, ctx);
  }
  if (tau <= lo0) return 1.0;
  if (tau <= lo1) return tau >= hi0 ? 0.0 : clamp01(fa_middle(tau, ctx));
  if (tau < hi0) {
    // Both probabilities in their middle band.
    const double md = tau >= hi1 ? 1.0 : clamp01(md_middle(tau, ctx));
    return clamp01(fa_middle(tau, ctx)) + md;
  }
  if (tau < hi1) return clamp01(md_middle(tau, ctx));
  return 1.0;
}

double optimal_threshold(const DetectionContext& ctx) {
  ctx.validate();
  return ctx.received_power() + ctx.sigma_w2_bar / ctx.mu;
}

double min_total_error(const DetectionContext& ctx) {
  ctx.validate();
  const double rx = ctx.received_power();
  if (rx == 0.0) return 1.0;
  if (rx > ctx.sigma_w2_bar * (ctx.mu - 1.0 / ctx.mu)) return 0.0;
  const double xi = std::log(ctx.mu * ctx.sigma_w2_bar / (rx + ctx.sigma_w2_bar / ctx.mu)) /
                    (2.0 * std::log(ctx.mu));
  if (xi < -kRoundingSlack || xi > 1.0 + kRoundingSlack || !std::isfinite(xi)) {
    throw DomainError("min_total_error: closed form outside [0, 1]");
  }
  return clamp01(xi);
}

DetectionResult analyze(const DetectionContext& ctx) {
  DetectionResult r;
  r.tau_star = optimal_threshold(ctx);
  r.p_fa_at_star = false_alarm_prob(r.tau_star, ctx);
  r.p_md_at_star = missed_detection_prob(r.tau_star, ctx);
  r.xi_star = r.p_fa_at_star + r.p_md_at_star;
  return r;
}

double max_covert_power(double sigma_w2_bar, double mu, double gain_w, double epsilon) {
  if (!(mu > 1)) throw DomainError("max_covert_power: mu must be > 1");
  if (!(epsilon > 0 && epsilon < 1)) throw DomainError("max_covert_power: epsilon must be in (0, 1)");
  if (!(sigma_w2_bar > 0)) throw DomainError("max_covert_power: noise power must be > 0");
  if (!(gain_w >= 0)) throw DomainError("max_covert_power: gain must be >= 0");
  if (gain_w == 0.0) return std::numeric_limits<double>::infinity();
  const double budget = sigma_w2_bar * (std::pow(mu, 1.0 - 2.0 * (1.0 - epsilon)) - 1.0 / mu);
  return std::max(0.0, budget / gain_w);
}

}  // namespace covert::detection
