#include "covert/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "covert/errors.hpp"
#include "covert/oracle.hpp"

namespace covert::sweep {

Family family_from_name(const std::string& name) {
  if (name == "fidelity") return Family::FidelityThreshold;
  if (name == "covert") return Family::Covertness;
  if (name == "mu-pmax") return Family::MuPmax;
  throw ConfigError("unknown sweep '" + name + "' (expected fidelity, covert or mu-pmax)");
}

std::string family_name(Family f) {
  switch (f) {
    case Family::FidelityThreshold: return "fidelity";
    case Family::Covertness: return "covert";
    case Family::MuPmax: return "mu-pmax";
  }
  return "fidelity";
}

SweepSpec SweepSpec::defaults(Family f) {
  SweepSpec s;
  s.family = f;
  switch (f) {
    case Family::FidelityThreshold:
      s.values = {0.82, 0.83, 0.84, 0.85, 0.86};
      break;
    case Family::Covertness:
      s.values = {0.93, 0.94, 0.95, 0.96, 0.97};
      break;
    case Family::MuPmax:
      s.values = {1.5, 2.0, 3.0};
      s.values2 = {-90.0, -85.0, -80.0, -75.0};
      break;
  }
  return s;
}

config::ExperimentConfig point_config(const config::ExperimentConfig& base, Family f, double v, double v2) {
  config::ExperimentConfig c = base;
  switch (f) {
    case Family::FidelityThreshold:
      c.env.F_min = v;
      break;
    case Family::Covertness:
      c.env.epsilon = 1.0 - v;
      break;
    case Family::MuPmax:
      c.env.mu = v;
      c.env.P_max = channel::dbm_to_watts(v2);
      break;
  }
  c.validate();
  return c;
}

SweepRow run_point(const config::ExperimentConfig& base, Family f, double v, double v2, gppo::Variant variant,
                   std::uint64_t seed) {
  const auto cfg = point_config(base, f, v, v2);
  SweepRow row;
  row.value = v;
  if (f == Family::MuPmax) row.value2 = v2;
  row.variant = variant;
  row.seed = seed;

  gppo::CovertTrainingEnv train_env(cfg.env, seed);
  const auto result = gppo::train(train_env, cfg.gppo, variant, seed);

  const std::size_t window = std::max<std::size_t>(1, result.curve.size() / 10);
  double lo = INFINITY, hi = -INFINITY, sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = result.curve.size() - window; i < result.curve.size(); ++i) {
    const double L = result.curve[i].latency_mean;
    if (!std::isfinite(L)) continue;
    lo = std::min(lo, L);
    hi = std::max(hi, L);
    sum += L;
    ++n;
  }
  row.latency_amplitude = n > 0 ? (hi - lo) / (sum / static_cast<double>(n)) : NAN;

  // Evaluation states depend only on the seed, so every variant and every
  // sweep value sees the same channels and prompts.
  const env::CovertEnv eval_env(cfg.env, seed);
  const auto states = oracle::frozen_scenarios(cfg.env, seed, cfg.eval_states);
  const auto ev = oracle::evaluate_policy(result.state.policy, eval_env, states);
  row.mean_latency = ev.mean_latency;
  row.violation_rate = ev.violation_rate;
  row.mean_reward = ev.mean_reward;
  return row;
}

std::vector<SweepRow> run_sweep(const config::ExperimentConfig& base, const SweepSpec& spec,
                                const Progress& progress) {
  if (spec.values.empty()) throw ConfigError("sweep: no values");
  if (spec.family == Family::MuPmax && spec.values2.empty()) throw ConfigError("sweep: no P_max values");
  const auto seeds = spec.seeds.empty() ? base.seeds : spec.seeds;
  const std::vector<double> second = spec.family == Family::MuPmax ? spec.values2 : std::vector<double>{0.0};
  std::vector<SweepRow> rows;
  for (double v : spec.values) {
    for (double v2 : second) {
      for (auto variant : spec.variants) {
        for (auto seed : seeds) {
          SweepRow row;
          try {
            row = run_point(base, spec.family, v, v2, variant, seed);
          } catch (const std::exception& e) {
            row = SweepRow{};
            row.error = e.what();
            row.value = v;
            if (spec.family == Family::MuPmax) row.value2 = v2;
            row.variant = variant;
            row.seed = seed;
            row.missing = true;
          }
          if (progress) progress(row);
          rows.push_back(row);
        }
      }
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, Family f, const std::vector<SweepRow>& rows) {
  const bool two = f == Family::MuPmax;
  out << (two ? "sweep_value,sweep_value2," : "sweep_value,")
      << "variant,seed,mean_latency,latency_amplitude,violation_rate\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.10g,", r.value);
    out << buf;
    if (two) {
      std::snprintf(buf, sizeof buf, "%.10g,", r.value2.value_or(NAN));
      out << buf;
    }
    out << gppo::variant_name(r.variant) << ',' << r.seed << ',';
    if (r.missing) {
      out << "NA,NA,NA\n";
      continue;
    }
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", r.mean_latency, r.latency_amplitude, r.violation_rate);
    out << buf;
  }
}

std::vector<CellMean> seed_average(const std::vector<SweepRow>& rows) {
  constexpr double kNoValue = -1e300;
  std::map<std::tuple<int, double, double>, std::pair<double, std::size_t>> acc;
  for (const auto& r : rows) {
    if (r.missing) continue;
    auto& a = acc[{static_cast<int>(r.variant), r.value, r.value2.value_or(kNoValue)}];
    a.first += r.mean_latency;
    ++a.second;
  }
  std::vector<CellMean> out;
  for (const auto& [k, a] : acc) {
    const auto v2 = std::get<2>(k);
    out.push_back({static_cast<gppo::Variant>(std::get<0>(k)), std::get<1>(k),
                   v2 == kNoValue ? std::nullopt : std::optional<double>(v2), a.first / static_cast<double>(a.second),
                   a.second});
  }
  return out;
}

}  // namespace covert::sweep
