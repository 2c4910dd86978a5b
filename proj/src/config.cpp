#include "covert/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

#include "covert/errors.hpp"

namespace covert::config {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Field {
  std::string key;
  std::function<json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const json&)> set;
};

[[noreturn]] void bad_type(const std::string& key, const char* want) {
  throw ConfigError("config key '" + key + "' expects " + want);
}

template <class Ref>
Field real(std::string key, Ref ref) {
  return {key, [ref](const ExperimentConfig& c) { return json(ref(const_cast<ExperimentConfig&>(c))); },
          [ref, key](ExperimentConfig& c, const json& v) {
            if (!v.is_number()) bad_type(key, "a number");
            ref(c) = v.get<double>();
          }};
}

template <class Ref>
Field integer(std::string key, Ref ref) {
  return {key, [ref](const ExperimentConfig& c) { return json(ref(const_cast<ExperimentConfig&>(c))); },
          [ref, key](ExperimentConfig& c, const json& v) {
            if (!v.is_number_integer()) bad_type(key, "an integer");
            using T = std::remove_reference_t<decltype(ref(c))>;
            if constexpr (std::is_unsigned_v<T>) {
              if (v.get<std::int64_t>() < 0) bad_type(key, "a non-negative integer");
            }
            ref(c) = v.get<T>();
          }};
}

template <class Ref>
Field text(std::string key, Ref ref) {
  return {key, [ref](const ExperimentConfig& c) { return json(ref(const_cast<ExperimentConfig&>(c))); },
          [ref, key](ExperimentConfig& c, const json& v) {
            if (!v.is_string()) bad_type(key, "a string");
            ref(c) = v.get<std::string>();
          }};
}

#define REF(expr) [](ExperimentConfig & c) -> auto& { return expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back(real("channel.g0", REF(c.env.channel.g0)));
    v.push_back(real("channel.d_b", REF(c.env.channel.d_b)));
    v.push_back(real("channel.d_w", REF(c.env.channel.d_w)));
    v.push_back(real("channel.K", REF(c.env.channel.K)));
    v.push_back(real("channel.B", REF(c.env.channel.B)));
    v.push_back(real("channel.sigma_b2", REF(c.env.channel.sigma_b2)));
    v.push_back(real("detection.sigma_w2_bar", REF(c.env.sigma_w2_bar)));
    v.push_back(real("detection.mu", REF(c.env.mu)));
    v.push_back({"env.kappa_levels", [](const ExperimentConfig& c) { return json(c.env.kappa_levels); },
                 [](ExperimentConfig& c, const json& j) {
                   if (!j.is_array()) bad_type("env.kappa_levels", "an array of numbers");
                   std::vector<double> levels;
                   for (const auto& x : j) {
                     if (!x.is_number()) bad_type("env.kappa_levels", "an array of numbers");
                     levels.push_back(x.get<double>());
                   }
                   c.env.kappa_levels = levels;
                 }});
    v.push_back(real("env.P_max", REF(c.env.P_max)));
    v.push_back(real("env.F_min", REF(c.env.F_min)));
    v.push_back(real("env.R_min", REF(c.env.R_min)));
    v.push_back(real("env.epsilon", REF(c.env.epsilon)));
    v.push_back(real("env.beta_r", REF(c.env.beta_r)));
    v.push_back(real("env.beta_e", REF(c.env.beta_e)));
    v.push_back(real("env.beta_f", REF(c.env.beta_f)));
    v.push_back(integer("env.episode_len", REF(c.env.episode_len)));
    v.push_back(integer("env.L_min", REF(c.env.L_min)));
    v.push_back(integer("env.L_max", REF(c.env.L_max)));
    v.push_back(real("env.S", REF(c.env.S)));
    v.push_back(real("env.T_proc", REF(c.env.T_proc)));
    v.push_back({"env.probe_power",
                 [](const ExperimentConfig& c) { return c.env.probe_power ? json(*c.env.probe_power) : json(nullptr); },
                 [](ExperimentConfig& c, const json& j) {
                   if (j.is_null()) {
                     c.env.probe_power.reset();
                   } else if (j.is_number()) {
                     c.env.probe_power = j.get<double>();
                   } else {
                     bad_type("env.probe_power", "a number or null");
                   }
                 }});
    v.push_back(real("env.latency_cap", REF(c.env.latency_cap)));
    v.push_back(real("pcae.kappa", REF(c.kappa)));
    v.push_back(integer("pcae.head", REF(c.env.head)));
    v.push_back(integer("pcae.tail", REF(c.env.tail)));
    v.push_back(integer("pcae.r_min", REF(c.r_min)));
    v.push_back(integer("pcae.r_max", REF(c.r_max)));
    v.push_back({"pcae.fidelity", [](const ExperimentConfig& c) { return json(c.env.fidelity.name()); },
                 [](ExperimentConfig& c, const json& j) {
                   if (!j.is_string()) bad_type("pcae.fidelity", "a string");
                   c.env.fidelity.kind = pcae::FidelityModel::from_name(j.get<std::string>()).kind;
                 }});
    v.push_back(real("pcae.f_hi", REF(c.env.fidelity.f_hi)));
    v.push_back(real("pcae.f_lo", REF(c.env.fidelity.f_lo)));
    v.push_back(real("pcae.power", REF(c.env.fidelity.power)));
    v.push_back(integer("pcae.embedding_dim", REF(c.env.fidelity.embedding_dim)));
    v.push_back(integer("gppo.G", REF(c.gppo.G)));
    v.push_back(real("gppo.eps_clip", REF(c.gppo.eps_clip)));
    v.push_back(real("gppo.beta_kl", REF(c.gppo.beta_kl)));
    v.push_back(real("gppo.gamma", REF(c.gppo.gamma)));
    v.push_back(real("gppo.lam", REF(c.gppo.lam)));
    v.push_back(real("gppo.lr", REF(c.gppo.lr)));
    v.push_back(real("gppo.lr_decay", REF(c.gppo.lr_decay)));
    v.push_back(integer("gppo.total_steps", REF(c.gppo.total_steps)));
    v.push_back(integer("gppo.rollout", REF(c.gppo.rollout)));
    v.push_back(integer("gppo.minibatch", REF(c.gppo.minibatch)));
    v.push_back(integer("gppo.epochs", REF(c.gppo.epochs)));
    v.push_back(integer("gppo.hidden", REF(c.gppo.hidden)));
    v.push_back(integer("gppo.hidden_layers", REF(c.gppo.hidden_layers)));
    v.push_back({"gppo.optimizer", [](const ExperimentConfig& c) { return json(nn::optimizer_name(c.gppo.optimizer)); },
                 [](ExperimentConfig& c, const json& j) {
                   if (!j.is_string()) bad_type("gppo.optimizer", "a string");
                   c.gppo.optimizer = nn::optimizer_from_name(j.get<std::string>());
                 }});
    v.push_back(real("gppo.max_grad_norm", REF(c.gppo.max_grad_norm)));
    v.push_back(real("gppo.log_std_min", REF(c.gppo.log_std_min)));
    v.push_back(real("gppo.log_std_max", REF(c.gppo.log_std_max)));
    v.push_back(real("gppo.target_kl", REF(c.gppo.target_kl)));
    v.push_back({"experiment.seeds", [](const ExperimentConfig& c) { return json(c.seeds); },
                 [](ExperimentConfig& c, const json& j) {
                   std::vector<std::uint64_t> seeds;
                   if (j.is_number_unsigned()) {
                     seeds.push_back(j.get<std::uint64_t>());
                   } else if (j.is_array()) {
                     for (const auto& x : j) {
                       if (!x.is_number_unsigned()) bad_type("experiment.seeds", "non-negative integers");
                       seeds.push_back(x.get<std::uint64_t>());
                     }
                   } else {
                     bad_type("experiment.seeds", "an array of non-negative integers");
                   }
                   c.seeds = seeds;
                 }});
    v.push_back(text("experiment.output_dir", REF(c.output_dir)));
    v.push_back(text("experiment.scorer", REF(c.scorer)));
    v.push_back(text("experiment.variant", REF(c.variant)));
    v.push_back(integer("experiment.eval_states", REF(c.eval_states)));
    v.push_back(integer("experiment.oracle_power_points", REF(c.oracle_power_points)));
    return v;
  }();
  return f;
}

#undef REF

const Field& field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  env.validate();
  gppo.validate();
  if (seeds.empty()) throw ConfigError("experiment: need at least one seed");
  if (!(kappa > 0 && kappa <= 1)) throw ConfigError("pcae: kappa must be in (0, 1]");
  if (r_min < 0 || r_max < r_min) throw ConfigError("pcae: need 0 <= r_min <= r_max");
  if (eval_states < 1) throw ConfigError("experiment: eval_states must be >= 1");
  if (oracle_power_points < 100) throw ConfigError("experiment: oracle_power_points must be >= 100");
  gppo::variant_from_name(variant);
  if (scorer.empty()) throw ConfigError("experiment: scorer must be 'builtin' or a command line");
}

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

std::string serialize(const ExperimentConfig& c) {
  ordered_json j = ordered_json::object();
  for (const auto& f : fields()) j[f.key] = ordered_json::parse(f.get(c).dump());
  return j.dump(2) + "\n";
}

ExperimentConfig parse(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  // Apply in canonical order so the result does not depend on file order.
  for (const auto& f : fields()) {
    if (j.contains(f.key)) f.set(c, j[f.key]);
  }
  for (const auto& [k, v] : j.items()) field(k);
  return c;
}

ExperimentConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void save(const std::string& path, const ExperimentConfig& c) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path);
  out << serialize(c);
}

void apply_override(ExperimentConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError("override must look like key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  field(key).set(c, value);
}

}  // namespace covert::config
