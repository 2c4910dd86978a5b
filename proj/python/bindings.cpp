#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "covert/channel.hpp"
#include "covert/config.hpp"
#include "covert/detection.hpp"
#include "covert/env.hpp"
#include "covert/errors.hpp"
#include "covert/gppo.hpp"
#include "covert/oracle.hpp"
#include "covert/pcae.hpp"

namespace py = pybind11;
using namespace covert;

namespace {

pcae::TokenSequence seq(const std::vector<std::int64_t>& ids, std::int64_t V) { return {ids, V}; }

py::dict eval_dict(const oracle::EvalSummary& e, const oracle::GapReport& g) {
  py::dict d;
  d["mean_latency"] = e.mean_latency;
  d["violation_rate"] = e.violation_rate;
  d["mean_reward"] = e.mean_reward;
  d["oracle_gap"] = g.gap;
  d["oracle_violation_rate"] = g.violation_rate;
  d["oracle_feasible"] = g.n_feasible;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Covert prompt transmission core";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  auto det = m.def_submodule("detection");
  det.def("optimal_threshold", [](double s2, double mu, double g, double P) {
    return detection::optimal_threshold({s2, mu, g, P});
  }, py::arg("sigma_w2_bar"), py::arg("mu"), py::arg("gain_w"), py::arg("power"));
  det.def("min_total_error", [](double s2, double mu, double g, double P) {
    return detection::min_total_error({s2, mu, g, P});
  }, py::arg("sigma_w2_bar"), py::arg("mu"), py::arg("gain_w"), py::arg("power"));
  det.def("total_error", [](double tau, double s2, double mu, double g, double P) {
    return detection::total_error(tau, {s2, mu, g, P});
  }, py::arg("tau"), py::arg("sigma_w2_bar"), py::arg("mu"), py::arg("gain_w"), py::arg("power"));
  det.def("max_covert_power", &detection::max_covert_power, py::arg("sigma_w2_bar"), py::arg("mu"),
          py::arg("gain_w"), py::arg("epsilon"));

  auto ch = m.def_submodule("channel");
  ch.def("path_gain", &channel::path_gain, py::arg("g0"), py::arg("d"));
  ch.def("snr_bob", &channel::snr_bob, py::arg("gain_b"), py::arg("power"), py::arg("sigma_b2"));
  ch.def("rate_bob", &channel::rate_bob, py::arg("bandwidth"), py::arg("snr"));
  ch.def("total_latency", [](double Lp, double S, double R, double T) {
    return channel::total_latency({Lp, S, R, T});
  }, py::arg("L_prime"), py::arg("S"), py::arg("rate"), py::arg("T_proc"));
  ch.def("dbm_to_watts", &channel::dbm_to_watts);

  auto pc = m.def_submodule("pcae");
  py::class_<pcae::EncryptionKey>(pc, "EncryptionKey")
      .def_readonly("offsets", &pcae::EncryptionKey::offsets)
      .def_readonly("perm", &pcae::EncryptionKey::perm)
      .def_readonly("vocab_size", &pcae::EncryptionKey::vocab_size)
      .def("to_json", &pcae::format_key)
      .def_static("from_json", [](const std::string& s) { return pcae::parse_key(s); });
  pc.def("make_key", [](std::vector<std::int64_t> offsets, std::vector<std::size_t> perm, std::int64_t V,
                        std::int64_t r_min, std::int64_t r_max) {
    pcae::EncryptionKey k{std::move(offsets), std::move(perm), V, r_min, r_max};
    return pcae::parse_key(pcae::format_key(k));
  }, py::arg("offsets"), py::arg("perm"), py::arg("vocab_size"), py::arg("r_min") = 1, py::arg("r_max") = 10);
  pc.def("generate_key", [](std::size_t L, std::int64_t V, std::int64_t r_min, std::int64_t r_max,
                            std::uint64_t seed) {
    Rng rng(seed);
    return pcae::generate_key(L, V, r_min, r_max, rng);
  }, py::arg("length"), py::arg("vocab_size"), py::arg("r_min") = 1, py::arg("r_max") = 10, py::arg("seed") = 0);
  pc.def("encrypt", [](const std::vector<std::int64_t>& ids, const pcae::EncryptionKey& k) {
    return pcae::encrypt(seq(ids, k.vocab_size), k).ids;
  });
  pc.def("decrypt", [](const std::vector<std::int64_t>& ids, const pcae::EncryptionKey& k) {
    return pcae::decrypt(seq(ids, k.vocab_size), k).ids;
  });
  pc.def("compressed_length", &pcae::compressed_length, py::arg("length"), py::arg("kappa"));
  pc.def("compress", [](const std::vector<std::int64_t>& ids, std::int64_t V, const std::vector<double>& surprisal,
                        double kappa, std::size_t head, std::size_t tail) {
    return pcae::compress(seq(ids, V), {surprisal}, {kappa, head, tail}).ids;
  }, py::arg("ids"), py::arg("vocab_size"), py::arg("surprisal"), py::arg("kappa"), py::arg("head") = 15,
     py::arg("tail") = 15);
  pc.def("unigram_surprisal", [](const std::vector<std::int64_t>& ids, const std::vector<double>& counts) {
    return pcae::score_unigram(seq(ids, static_cast<std::int64_t>(counts.size())), counts).scores;
  }, py::arg("ids"), py::arg("counts"));

  m.def("train", [](const std::string& variant, std::uint64_t seed, const std::vector<std::string>& overrides) {
    config::ExperimentConfig cfg;
    for (const auto& o : overrides) config::apply_override(cfg, o);
    cfg.validate();
    const auto v = gppo::variant_from_name(variant);
    py::list curve;
    gppo::TrainResult res;
    {
      py::gil_scoped_release release;
      gppo::CovertTrainingEnv env(cfg.env, seed);
      res = gppo::train(env, cfg.gppo, v, seed);
    }
    for (const auto& c : res.curve) curve.append(c.reward_mean);
    const env::CovertEnv e(cfg.env, seed);
    const auto states = oracle::frozen_scenarios(cfg.env, seed, cfg.eval_states);
    py::dict out = eval_dict(oracle::evaluate_policy(res.state.policy, e, states),
                             oracle::compare_to_oracle(res.state.policy, e, states, cfg.oracle_power_points));
    out["reward_curve"] = curve;
    return out;
  }, py::arg("variant") = "gppo", py::arg("seed") = 7, py::arg("overrides") = std::vector<std::string>{});
}
