#include "covert/channel.hpp"

#include <numbers>

#include "covert/errors.hpp"

namespace covert::channel {

void ChannelParams::validate() const {
  if (!(g0 > 0)) throw DomainError("channel: g0 must be > 0");
  if (!(d_b > 0) || !(d_w > 0)) throw DomainError("channel: distances must be > 0");
  if (!(K >= 0)) throw DomainError("channel: Rician factor must be >= 0");
  if (!(B > 0)) throw DomainError("channel: bandwidth must be > 0");
  if (!(sigma_b2 > 0)) throw DomainError("channel: Bob noise power must be > 0");
}

std::complex<double> sample_small_scale(double K, Rng& rng) {
  if (!(K >= 0)) throw DomainError("sample_small_scale: K must be >= 0");
  const double los = std::sqrt(K / (K + 1.0));
  const double nlos = std::sqrt(1.0 / (K + 1.0));
  // CN(0,1): real and imaginary parts each N(0, 1/2).
  const double re = rng.normal() * std::numbers::sqrt2 / 2.0;
  const double im = rng.normal() * std::numbers::sqrt2 / 2.0;
  return {los + nlos * re, nlos * im};
}

double path_gain(double g0, double d) {
  if (!(g0 > 0)) throw DomainError("path_gain: g0 must be > 0");
  if (!(d > 0)) throw DomainError("path_gain: distance must be > 0");
  return g0 / (d * d);
}

double snr_bob(double gain_b, double P_t, double sigma_b2) {
  if (!(sigma_b2 > 0)) throw DomainError("snr_bob: noise power must be > 0");
  if (!(P_t >= 0)) throw DomainError("snr_bob: power must be >= 0");
  if (!(gain_b >= 0)) throw DomainError("snr_bob: gain must be >= 0");
  return gain_b * P_t / sigma_b2;
}

double rate_bob(double B, double snr) {
  if (!(B > 0)) throw DomainError("rate_bob: bandwidth must be > 0");
  if (!(snr >= 0)) throw DomainError("rate_bob: snr must be >= 0");
  return B * std::log1p(snr) / std::numbers::ln2;
}

double total_latency(const LatencyInputs& inp) {
  if (!(inp.R_b > 0)) throw DomainError("total_latency: rate must be > 0");
  if (!(inp.L_prime >= 1)) throw DomainError("total_latency: L' must be >= 1");
  if (!(inp.S > 0)) throw DomainError("total_latency: S must be > 0");
  if (!(inp.T_proc >= 0)) throw DomainError("total_latency: T_proc must be >= 0");
  return inp.L_prime * inp.S / inp.R_b + inp.T_proc;
}

ChannelRealization draw_realization(const ChannelParams& p, Rng& rng) {
  ChannelRealization r;
  const auto hb = sample_small_scale(p.K, rng);
  const auto hw = sample_small_scale(p.K, rng);
  r.h_b = std::sqrt(path_gain(p.g0, p.d_b)) * hb;
  r.h_w = std::sqrt(path_gain(p.g0, p.d_w)) * hw;
  r.gain_b = std::norm(r.h_b);
  r.gain_w = std::norm(r.h_w);
  return r;
}

}  // namespace covert::channel
