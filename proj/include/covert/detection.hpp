#pragma once

namespace covert::detection {

/// Warden-side parameters. Willie's noise power is log-uniform on
/// [sigma_w2_bar / mu, sigma_w2_bar * mu] and the energy detector operates
/// in the asymptotic (infinitely many samples) regime, so the received
/// statistic is sigma_w^2 under H0 and gain_w * P_t + sigma_w^2 under H1.
struct DetectionContext {
  double sigma_w2_bar = 1e-16;  ///< nominal noise power (W)
  double mu = 2.0;              ///< uncertainty factor, > 1
  double gain_w = 0.0;          ///< |h_w|^2
  double P_t = 0.0;             ///< transmit power (W)

  void validate() const;
  double received_power() const { return gain_w * P_t; }
};

struct DetectionResult {
  double tau_star = 0.0;
  double xi_star = 0.0;
  double p_fa_at_star = 0.0;
  double p_md_at_star = 0.0;
};

double false_alarm_prob(double tau, const DetectionContext& ctx);
double missed_detection_prob(double tau, const DetectionContext& ctx);

/// P_FA + P_MD as the five-branch piecewise function. When the received
/// power exceeds sigma_w2_bar * (mu - 1/mu) the middle band is empty and the
/// two component probabilities are summed directly.
double total_error(double tau, const DetectionContext& ctx);

/// tau* = gain_w P_t + sigma_w2_bar / mu.
double optimal_threshold(const DetectionContext& ctx);

/// Minimum of total_error over tau. Uses the closed form
///   xi* = ln(mu sigma^2 / (gain_w P_t + sigma^2/mu)) / (2 ln mu)
/// whenever the received power is at most sigma^2 (mu - 1/mu). Above that
/// the warden separates the hypotheses perfectly and the minimum is 0,
/// attained at tau*. Throws DomainError if the closed form leaves [0, 1] by
/// more than rounding.
double min_total_error(const DetectionContext& ctx);

DetectionResult analyze(const DetectionContext& ctx);

/// Largest P_t with min_total_error >= 1 - epsilon:
///   sigma^2 (mu^(1 - 2(1 - epsilon)) - 1/mu) / gain_w, floored at 0.
/// Returns +infinity when gain_w == 0 (no covertness constraint).
double max_covert_power(double sigma_w2_bar, double mu, double gain_w, double epsilon);

}  // namespace covert::detection
