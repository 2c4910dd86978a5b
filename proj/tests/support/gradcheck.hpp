// Central finite-difference checks of the actor and critic batch gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "covert/gppo.hpp"

namespace covert::testing {

struct GradCheck {
  double actor_rel = 0.0;
  double critic_rel = 0.0;
};

inline double rel_error(const nn::VectorXd& a, const nn::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

// Random policy and batch. Old log-probabilities sit within +-0.1 of the
// current ones so the ratio stays inside the clip band, away from kinks.
inline GradCheck gradient_check(std::uint64_t seed, int hidden = 16, int batch_size = 8) {
  Rng rng(seed);
  gppo::HyperParams hp;
  hp.hidden = hidden;
  hp.hidden_layers = 2;
  const int M = 4;
  auto p = gppo::PolicyParams::create(M, hp, rng.normal(), rng);
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta[i] += 0.1 * rng.normal();
  std::vector<gppo::Sample> batch(static_cast<std::size_t>(batch_size));
  for (auto& smp : batch) {
    for (auto& f : smp.s) f = rng.normal();
    const auto out = gppo::policy_output(p, smp.s);
    smp.a = {static_cast<int>(rng.uniform_int(0, M - 1)), out.mean + std::exp(out.log_std) * rng.normal()};
    smp.log_prob_old = gppo::log_prob(out, smp.a) + 0.2 * (rng.uniform() - 0.5);
    smp.adv = rng.normal();
    smp.v_target = rng.normal();
  }
  const double eps = 0.2, beta = 0.1;

  GradCheck r;
  nn::VectorXd ga = nn::VectorXd::Zero(p.theta.size());
  gppo::actor_batch_loss(p, p.theta, batch, eps, beta, &ga);
  nn::VectorXd na(p.theta.size());
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(p.theta[i]));
    nn::VectorXd t = p.theta;
    t[i] += h;
    const double up = gppo::actor_batch_loss(p, t, batch, eps, beta, nullptr);
    t[i] -= 2 * h;
    const double down = gppo::actor_batch_loss(p, t, batch, eps, beta, nullptr);
    na[i] = (up - down) / (2 * h);
  }
  r.actor_rel = rel_error(ga, na);

  nn::VectorXd gc = nn::VectorXd::Zero(p.lambda.size());
  gppo::critic_batch_loss(p, p.lambda, batch, &gc);
  nn::VectorXd nc(p.lambda.size());
  for (Eigen::Index i = 0; i < p.lambda.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(p.lambda[i]));
    nn::VectorXd l = p.lambda;
    l[i] += h;
    const double up = gppo::critic_batch_loss(p, l, batch, nullptr);
    l[i] -= 2 * h;
    const double down = gppo::critic_batch_loss(p, l, batch, nullptr);
    nc[i] = (up - down) / (2 * h);
  }
  r.critic_rel = rel_error(gc, nc);
  return r;
}

}  // namespace covert::testing
