// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fail.
//
//   acceptance [name ...]    run only the named criteria

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "covert/config.hpp"
#include "covert/detection.hpp"
#include "covert/gppo.hpp"
#include "covert/oracle.hpp"
#include "covert/pcae.hpp"
#include "covert/sweep.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace covert;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};
constexpr std::size_t kEvalStates = 500;

// Full training budget from the default configuration.
config::ExperimentConfig full_budget() { return config::ExperimentConfig{}; }

// Reduced budget for the sweep families.
config::ExperimentConfig sweep_budget() {
  config::ExperimentConfig c;
  c.gppo.total_steps = 20480;
  c.eval_states = kEvalStates;
  return c;
}

struct TrainedRun {
  double eval_reward = 0.0;
  double eval_latency = 0.0;
  oracle::GapReport gap;
};

// Trained policies are shared between criteria.
std::map<std::pair<gppo::Variant, std::uint64_t>, TrainedRun> g_runs;

const TrainedRun& trained(gppo::Variant v, std::uint64_t seed) {
  const auto key = std::make_pair(v, seed);
  if (auto it = g_runs.find(key); it != g_runs.end()) return it->second;
  const auto cfg = full_budget();
  const auto t0 = Clock::now();
  gppo::CovertTrainingEnv env(cfg.env, seed);
  const auto res = gppo::train(env, cfg.gppo, v, seed);
  const env::CovertEnv eval_env(cfg.env, seed);
  const auto states = oracle::frozen_scenarios(cfg.env, seed, kEvalStates);
  TrainedRun r;
  const auto ev = oracle::evaluate_policy(res.state.policy, eval_env, states);
  r.eval_reward = ev.mean_reward;
  r.eval_latency = ev.mean_latency;
  r.gap = oracle::compare_to_oracle(res.state.policy, eval_env, states, cfg.oracle_power_points);
  std::fprintf(stderr, "  trained %s seed %llu: eval reward %.4f, gap %.4f, violations %.4f (%.0f s)\n",
               gppo::variant_name(v).c_str(), static_cast<unsigned long long>(seed), r.eval_reward, r.gap.gap,
               r.gap.violation_rate, seconds_since(t0));
  return g_runs.emplace(key, r).first->second;
}

detection::DetectionContext random_context(Rng& rng) {
  detection::DetectionContext c;
  c.sigma_w2_bar = std::pow(10.0, -18 + 6 * rng.uniform());
  c.mu = 1.05 + 3.95 * rng.uniform();
  c.gain_w = std::pow(10.0, -9 + 4 * rng.uniform());
  c.P_t = c.sigma_w2_bar / c.gain_w * std::pow(10.0, -3 + 5 * rng.uniform());
  return c;
}

// -- criteria ----------------------------------------------------------------

Verdict closed_form_threshold() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0, worst_tau = 0.0;
  int separated = 0;
  bool below = false;
  for (int k = 0; k < 1000; ++k) {
    const auto c = random_context(rng);
    const auto g = oracle::threshold_grid(c, 100000);
    const double xi = detection::min_total_error(c);
    if (xi == 0.0) ++separated;
    worst = std::max(worst, std::abs(g.xi_min - xi));
    if (g.xi_min < xi - 1e-12) below = true;
    // the closed-form threshold attains the grid minimum
    worst_tau = std::max(worst_tau, std::abs(detection::total_error(detection::optimal_threshold(c), c) - xi));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && worst_tau <= 1e-12 && !below && secs < 60.0,
          fmt("max |grid - closed form| = %.3g, max |xi(tau*) - xi*| = %.3g, %d separated contexts, %.1f s", worst,
              worst_tau, separated, secs)};
}

Verdict worked_example() {
  const pcae::TokenSequence x{{16787, 323, 3539, 1621, 25466}, 151936};
  const pcae::EncryptionKey key{{4, 2, 9, 1, 4}, {2, 0, 4, 1, 3}, 151936, 1, 10};
  const auto off = pcae::apply_offsets(x, key);
  const auto y = pcae::encrypt(x, key);
  const bool ok = off.ids == std::vector<pcae::TokenId>{16791, 325, 3548, 1622, 25470} &&
                  y.ids == std::vector<pcae::TokenId>{3548, 16791, 25470, 325, 1622} && pcae::decrypt(y, key) == x;
  return {ok, "ciphertext [" + std::to_string(y.ids[0]) + ", " + std::to_string(y.ids[1]) + ", " +
                  std::to_string(y.ids[2]) + ", " + std::to_string(y.ids[3]) + ", " + std::to_string(y.ids[4]) + "]"};
}

Verdict round_trip() {
  const auto t0 = Clock::now();
  Rng rng(202);
  int failures = 0;
  for (int k = 0; k < 10000; ++k) {
    const std::int64_t V = rng.uniform_int(2, 200000);
    const auto L = static_cast<std::size_t>(rng.uniform_int(1, 2000));
    pcae::TokenSequence x{{}, V};
    for (std::size_t i = 0; i < L; ++i) x.ids.push_back(rng.uniform_int(0, V - 1));
    const std::int64_t r_max = rng.uniform_int(0, V - 1);
    const auto key = pcae::generate_key(L, V, rng.uniform_int(0, r_max), r_max, rng);
    if (!(pcae::decrypt(pcae::encrypt(x, key), key) == x)) ++failures;
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 10.0, fmt("%d failures in 10000 pairs, %.2f s", failures, secs)};
}

Verdict compression_laws() {
  Rng rng(303);
  int wrong_len = 0, wrong_ends = 0, wrong_set = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto L = static_cast<std::size_t>(rng.uniform_int(1, 5000));
    const double kappa = rng.uniform_open_low();
    const auto nh = static_cast<std::size_t>(rng.uniform_int(0, 30));
    const auto nt = static_cast<std::size_t>(rng.uniform_int(0, 30));
    pcae::TokenSequence x{{}, 5000};
    for (std::size_t i = 0; i < L; ++i) x.ids.push_back(rng.uniform_int(0, 4999));
    pcae::SurprisalVector s;
    for (std::size_t i = 1; i < L; ++i) s.scores.push_back(static_cast<double>(rng.uniform_int(0, 40)) / 3.0);
    const pcae::CompressionConfig cfg{kappa, nh, nt};
    const auto out = pcae::compress(x, s, cfg);
    const std::size_t target = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(kappa * L)));
    if (out.size() != target) ++wrong_len;
    const std::size_t h = std::min(nh, L);
    const std::size_t t = std::min(nt, L - h);
    bool ends = true;
    if (target >= h + t) {
      for (std::size_t i = 0; i < h; ++i) ends &= out.ids[i] == x.ids[i];
      for (std::size_t i = 0; i < t; ++i) ends &= out.ids[out.size() - 1 - i] == x.ids[L - 1 - i];
    } else {
      // budget below the reserves: head then tail, truncated to the budget
      std::vector<pcae::TokenId> reserve(x.ids.begin(), x.ids.begin() + static_cast<std::ptrdiff_t>(h));
      reserve.insert(reserve.end(), x.ids.end() - static_cast<std::ptrdiff_t>(t), x.ids.end());
      reserve.resize(target);
      ends &= out.ids == reserve;
    }
    if (!ends) ++wrong_ends;
    const auto ref = testing::brute_select(s.scores, L, kappa, nh, nt);
    std::vector<pcae::TokenId> expect;
    for (auto p : ref) expect.push_back(x.ids[p]);
    if (out.ids != expect) ++wrong_set;
  }
  return {wrong_len == 0 && wrong_ends == 0 && wrong_set == 0,
          fmt("1000 pairs: %d length, %d head/tail, %d selection mismatches", wrong_len, wrong_ends, wrong_set)};
}

Verdict piecewise_detection() {
  Rng rng(404);
  double worst_ref = 0.0, worst_sum = 0.0, worst_jump = 0.0;
  int range = 0, monotone = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto c = random_context(rng);
    const double rx = c.received_power();
    const double lo = c.sigma_w2_bar / c.mu / 2, hi = 2 * (rx + c.sigma_w2_bar * c.mu);
    double prev_fa = 2.0, prev_md = -1.0;
    for (int i = 0; i <= 1000; ++i) {
      const double tau = lo + (hi - lo) * i / 1000.0;
      const double fa = detection::false_alarm_prob(tau, c);
      const double md = detection::missed_detection_prob(tau, c);
      const double xi = detection::total_error(tau, c);
      const auto rf = testing::fa_ref(tau, c.sigma_w2_bar, c.mu);
      const auto rm = testing::md_ref(tau, c.sigma_w2_bar, c.mu, rx);
      worst_ref = std::max({worst_ref, std::abs(fa - static_cast<double>(rf)), std::abs(md - static_cast<double>(rm))});
      worst_sum = std::max(worst_sum, std::abs(xi - (fa + md)));
      if (fa < 0 || fa > 1 || md < 0 || md > 1 || xi < 0 || xi > 1) ++range;
      if (fa > prev_fa + 1e-15 || md < prev_md - 1e-15) ++monotone;
      prev_fa = fa;
      prev_md = md;
    }
    // continuity at every breakpoint
    for (double b : {c.sigma_w2_bar / c.mu, c.sigma_w2_bar * c.mu, rx + c.sigma_w2_bar / c.mu, rx + c.sigma_w2_bar * c.mu}) {
      const double e = b * 1e-12;
      worst_jump = std::max(worst_jump, std::abs(detection::total_error(b - e, c) - detection::total_error(b + e, c)));
    }
  }
  return {worst_ref <= 1e-12 && worst_sum <= 1e-12 && range == 0 && monotone == 0 && worst_jump <= 1e-9,
          fmt("max ref err %.2g, max |xi - (fa + md)| %.2g, %d range and %d monotonicity breaks, max jump %.2g",
              worst_ref, worst_sum, range, monotone, worst_jump)};
}

Verdict gradient_checks() {
  double worst_a = 0.0, worst_c = 0.0;
  for (std::uint64_t p = 1; p <= 100; ++p) {
    const auto r = testing::gradient_check(1000 + p);
    worst_a = std::max(worst_a, r.actor_rel);
    worst_c = std::max(worst_c, r.critic_rel);
  }
  return {worst_a < 1e-4 && worst_c < 1e-4,
          fmt("100 points, max relative error actor %.2g, critic %.2g", worst_a, worst_c)};
}

Verdict policy_vs_oracle() {
  const auto t0 = Clock::now();
  double gap = 0.0, viol = 0.0;
  std::string per_seed;
  for (auto seed : kSeeds) {
    const auto& r = trained(gppo::Variant::GPPO, seed);
    gap += r.gap.gap / std::size(kSeeds);
    viol += r.gap.violation_rate / std::size(kSeeds);
    per_seed += fmt(" %.3f/%.3f", r.gap.gap, r.gap.violation_rate);
  }
  const double secs = seconds_since(t0);
  return {gap <= 0.15 && viol <= 0.05 && secs < 1800.0,
          fmt("mean gap %.4f, mean violations %.4f over 5 seeds (gap/viol:%s), %.0f s", gap, viol, per_seed.c_str(),
              secs)};
}

Verdict variant_ordering() {
  double r[3] = {0, 0, 0};
  const gppo::Variant vs[3] = {gppo::Variant::GPPO, gppo::Variant::GRPO, gppo::Variant::PPO};
  for (int i = 0; i < 3; ++i)
    for (auto seed : kSeeds) r[i] += trained(vs[i], seed).eval_reward / std::size(kSeeds);
  return {r[0] >= r[1] && r[0] >= r[2],
          fmt("mean eval reward gppo %.4f, grpo %.4f, ppo %.4f over 5 seeds", r[0], r[1], r[2])};
}

Verdict covertness_monotonicity() {
  const auto t0 = Clock::now();
  const auto base = sweep_budget();
  std::string detail;
  bool ok = true;
  auto check = [&](sweep::Family f, const std::vector<double>& values, bool increasing, const char* label) {
    sweep::SweepSpec spec;
    spec.family = f;
    spec.seeds.assign(std::begin(kSeeds), std::end(kSeeds));
    if (f == sweep::Family::MuPmax) {
      spec.values = {base.env.mu};
      spec.values2 = values;
    } else {
      spec.values = values;
    }
    const auto rows = sweep::run_sweep(base, spec, [](const sweep::SweepRow& row) {
      if (row.missing) std::fprintf(stderr, "  sweep run failed: %s\n", row.error.c_str());
    });
    for (auto v : spec.variants) {
      std::vector<double> lat;
      for (double x : values) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& row : rows) {
          const double key = f == sweep::Family::MuPmax ? row.value2.value_or(NAN) : row.value;
          if (row.variant == v && key == x && !row.missing) {
            sum += row.mean_latency;
            ++n;
          }
        }
        lat.push_back(n == std::size(kSeeds) ? sum / static_cast<double>(n) : NAN);
      }
      bool mono = std::all_of(lat.begin(), lat.end(), [](double l) { return std::isfinite(l); });
      for (std::size_t i = 1; i < lat.size(); ++i) mono &= increasing ? lat[i] >= lat[i - 1] : lat[i] <= lat[i - 1];
      ok &= mono;
      detail += fmt(" %s %s:", gppo::variant_name(v).c_str(), label);
      for (double l : lat) detail += fmt(" %.3f", l);
      if (!mono) detail += " (broken)";
      detail += ";";
    }
  };
  check(sweep::Family::Covertness, sweep::SweepSpec::defaults(sweep::Family::Covertness).values, true, "1-eps");
  check(sweep::Family::MuPmax, sweep::SweepSpec::defaults(sweep::Family::MuPmax).values2, false, "P_max");
  detail += fmt(" %.0f s", seconds_since(t0));
  return {ok, "seed-averaged latency" + detail};
}

Verdict ppo_special_case() {
  auto cfg = full_budget();
  cfg.gppo.total_steps = 8192;
  gppo::CovertTrainingEnv e1(cfg.env, 11), e2(cfg.env, 11);
  const auto ppo = gppo::train(e1, cfg.gppo, gppo::Variant::PPO, 11);
  auto single = cfg.gppo;
  single.G = 1;
  single.beta_kl = 0.0;
  const auto g1 = gppo::train(e2, single, gppo::Variant::GPPO, 11);
  const bool same = ppo.curve == g1.curve && ppo.state.policy.theta == g1.state.policy.theta &&
                    ppo.state.policy.lambda == g1.state.policy.lambda;
  return {same, fmt("%zu curve points, identical curves and parameters: %s", ppo.curve.size(), same ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"closed-form-threshold", closed_form_threshold},
      {"worked-example", worked_example},
      {"round-trip", round_trip},
      {"compression-laws", compression_laws},
      {"piecewise-detection", piecewise_detection},
      {"gradient-checks", gradient_checks},
      {"policy-vs-oracle", policy_vs_oracle},
      {"variant-ordering", variant_ordering},
      {"covertness-monotonicity", covertness_monotonicity},
      {"ppo-special-case", ppo_special_case},
  };
  const std::vector<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
