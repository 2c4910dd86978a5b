#include "doctest.h"

#include <cmath>

#include "covert/detection.hpp"
#include "covert/oracle.hpp"

using namespace covert;

TEST_CASE("threshold grid brackets the closed form") {
  const detection::DetectionContext ctx{1.0, 2.0, 1.0, 1.0};
  const auto g = oracle::threshold_grid(ctx, 100001);
  CHECK(g.lo == doctest::Approx(0.25));
  CHECK(g.hi == doctest::Approx(2 * (1.0 + 2.0)));
  CHECK(g.step == doctest::Approx((g.hi - g.lo) / 100000));
  CHECK(std::abs(g.tau_argmin - detection::optimal_threshold(ctx)) <= g.step);
  CHECK(g.xi_min >= detection::min_total_error(ctx) - 1e-15);
  CHECK(g.xi_min - detection::min_total_error(ctx) < 1e-4);
}

TEST_CASE("action grid is optimal against random actions") {
  env::EnvConfig cfg;
  env::CovertEnv e(cfg, 2);
  Rng rng(10);
  int feasible = 0;
  for (int k = 0; k < 40; ++k) {
    const auto sc = e.draw_scenario();
    const auto best = oracle::action_grid(e, sc, 200);
    if (!best.feasible) {
      for (int t = 0; t < 200; ++t) {
        const int m = static_cast<int>(rng.uniform_int(0, cfg.M() - 1));
        CHECK_FALSE(e.evaluate_power(sc, m, cfg.P_max * rng.uniform()).feasible());
      }
      continue;
    }
    ++feasible;
    const auto info = e.evaluate_power(sc, best.m, best.P_t);
    CHECK(info.feasible());
    CHECK(info.L_T == doctest::Approx(best.latency));
    const double bound = std::min(cfg.P_max, detection::max_covert_power(cfg.sigma_w2_bar, cfg.mu, sc.channel.gain_w,
                                                                         cfg.epsilon));
    for (int t = 0; t < 500; ++t) {
      const int m = static_cast<int>(rng.uniform_int(0, cfg.M() - 1));
      const auto other = e.evaluate_power(sc, m, bound * rng.uniform());
      if (other.feasible()) CHECK(other.L_T >= best.latency * (1 - 1e-2));
    }
  }
  CHECK(feasible > 20);
}

TEST_CASE("frozen scenarios are reproducible") {
  env::EnvConfig cfg;
  const auto a = oracle::frozen_scenarios(cfg, 3, 50);
  const auto b = oracle::frozen_scenarios(cfg, 3, 50);
  const auto c = oracle::frozen_scenarios(cfg, 4, 50);
  REQUIRE(a.size() == 50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].channel.gain_b == b[i].channel.gain_b);
    CHECK(a[i].L == b[i].L);
  }
  CHECK(a[0].channel.gain_b != c[0].channel.gain_b);
}

TEST_CASE("policy evaluation and gap report") {
  env::EnvConfig cfg;
  env::CovertEnv e(cfg, 1);
  gppo::HyperParams hp;
  hp.hidden = 8;
  Rng rng(1);
  const auto p = gppo::PolicyParams::create(cfg.M(), hp, 0.0, rng);
  const auto states = oracle::frozen_scenarios(cfg, 1, 60);
  const auto ev = oracle::evaluate_policy(p, e, states);
  CHECK(ev.n == 60);
  CHECK(ev.per_state.size() == 60);
  double viol = 0.0;
  for (const auto& s : ev.per_state) viol += s.feasible() ? 0.0 : 1.0;
  CHECK(ev.violation_rate == doctest::Approx(viol / 60));
  const auto gap = oracle::compare_to_oracle(p, e, states, 100);
  CHECK(gap.n_states == 60);
  CHECK(gap.n_feasible <= 60);
  CHECK(gap.oracle_beaten <= gap.n_feasible);
}
