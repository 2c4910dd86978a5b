#pragma once

#include <cmath>
#include <complex>

#include "covert/rng.hpp"

namespace covert::channel {

/// Large-scale geometry and link budget for the Alice->Bob and Alice->Willie
/// links. Defaults reproduce the evaluation setup: Alice at (0,0), Bob at
/// (100,0), Willie at (50,-50), 10 MHz bandwidth, Rician K = 2.
struct ChannelParams {
  double g0 = 1e-3;                     ///< reference gain at 1 m (linear)
  double d_b = 100.0;                   ///< Alice-Bob distance (m)
  double d_w = std::hypot(50.0, 50.0);  ///< Alice-Willie distance (m)
  double K = 2.0;                       ///< Rician factor (linear)
  double B = 1e7;                       ///< bandwidth (Hz)
  double sigma_b2 = 1e-12;              ///< Bob noise power (W)

  void validate() const;
};

struct ChannelRealization {
  std::complex<double> h_b;
  std::complex<double> h_w;
  double gain_b = 0.0;  ///< |h_b|^2
  double gain_w = 0.0;  ///< |h_w|^2
};

struct LatencyInputs {
  double L_prime = 1.0;  ///< compressed token count
  double S = 0.2;        ///< bits per token
  double R_b = 0.0;      ///< Bob rate (bit/s)
  double T_proc = 0.0;   ///< preprocessing time (s)
};

/// Small-scale Rician coefficient sqrt(K/(K+1)) + sqrt(1/(K+1)) * CN(0,1).
std::complex<double> sample_small_scale(double K, Rng& rng);

/// Free-space style path gain g0 / d^2.
double path_gain(double g0, double d);

double snr_bob(double gain_b, double P_t, double sigma_b2);

/// Shannon rate B log2(1 + snr).
double rate_bob(double B, double snr);

/// L' S / R_b + T_proc.
double total_latency(const LatencyInputs& inp);

/// One joint draw of both links: h_i = sqrt(g0 / d_i^2) * h~_i.
ChannelRealization draw_realization(const ChannelParams& p, Rng& rng);

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

}  // namespace covert::channel
