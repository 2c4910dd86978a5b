// covert: command-line front end for compression, encryption, detection
// analysis, training, evaluation, oracles and sweeps.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "covert/config.hpp"
#include "covert/detection.hpp"
#include "covert/errors.hpp"
#include "covert/gppo.hpp"
#include "covert/oracle.hpp"
#include "covert/pcae.hpp"
#include "covert/scorer_client.hpp"
#include "covert/sweep.hpp"

namespace fs = std::filesystem;
using namespace covert;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "Experiment config (flat dotted-key JSON)");
  sub->add_option("--set", c.overrides, "Override a config key: key=value (repeatable)");
}

config::ExperimentConfig load_config(const Common& c) {
  auto cfg = c.config_path.empty() ? config::ExperimentConfig{} : config::load(c.config_path);
  for (const auto& o : c.overrides) config::apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw FormatError("cannot write " + p.string());
  out << s;
}

void write_sidecar(const fs::path& dir, const std::string& command) {
  nlohmann::ordered_json j;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["command"] = command;
  j["finished_at"] = stamp;
  write_text(dir / "run_meta.json", j.dump(2) + "\n");
}

// Surprisal for a token file: builtin unigram model or an external scorer.
pcae::SurprisalVector score_sequence(const pcae::TokenSequence& tokens, const std::string& scorer,
                                     const std::string& counts_path) {
  if (scorer != "builtin") {
    auto client = scorer::ScorerClient::launch_command(scorer);
    client.handshake();
    if (client.info().vocab_size != tokens.vocab_size) {
      throw ConfigError("scorer vocabulary (" + std::to_string(client.info().vocab_size) +
                        ") differs from the token file (" + std::to_string(tokens.vocab_size) + ")");
    }
    return client.score_tokens(tokens.ids).scores();
  }
  std::vector<double> counts(static_cast<std::size_t>(tokens.vocab_size), 0.0);
  const auto corpus = counts_path.empty() ? tokens : pcae::read_tokens(counts_path);
  if (corpus.vocab_size != tokens.vocab_size) throw ConfigError("count corpus vocabulary differs from the input");
  for (auto id : corpus.ids) counts[static_cast<std::size_t>(id)] += 1.0;
  return pcae::score_unigram(tokens, counts);
}

int run(int argc, char** argv) {
  CLI::App app{"Covert prompt transmission toolkit"};
  app.require_subcommand(1);

  // compress
  Common c_compress;
  std::string in_path, out_path, counts_path, scorer_opt, positions_path;
  double kappa = -1;
  int head = -1, tail = -1;
  auto* compress = app.add_subcommand("compress", "Head/tail preserving top-surprisal compression of a token file");
  add_common(compress, c_compress);
  compress->add_option("--in", in_path, "Input token file")->required();
  compress->add_option("--out", out_path, "Output token file")->required();
  compress->add_option("--kappa", kappa, "Compression ratio in (0, 1]");
  compress->add_option("--head", head, "Head reserve");
  compress->add_option("--tail", tail, "Tail reserve");
  compress->add_option("--counts", counts_path, "Token file used as the unigram corpus (default: the input)");
  compress->add_option("--scorer", scorer_opt, "builtin, or a scorer command line");
  compress->add_option("--positions", positions_path, "Also write the retained positions, one per line");

  // encrypt / decrypt
  Common c_crypt;
  std::string key_path;
  bool new_key = false;
  std::uint64_t key_seed = 7;
  long long r_min = -1, r_max = -1;
  std::string offset_stage_path;
  auto* encrypt = app.add_subcommand("encrypt", "Offset + permutation encryption of a token file");
  add_common(encrypt, c_crypt);
  encrypt->add_option("--in", in_path, "Input token file")->required();
  encrypt->add_option("--out", out_path, "Output token file")->required();
  encrypt->add_option("--key", key_path, "Key file")->required();
  encrypt->add_flag("--new-key", new_key, "Generate a fresh key and write it to --key");
  encrypt->add_option("--seed", key_seed, "Seed for --new-key");
  encrypt->add_option("--r-min", r_min, "Smallest offset for --new-key");
  encrypt->add_option("--r-max", r_max, "Largest offset for --new-key");
  encrypt->add_option("--offset-stage", offset_stage_path, "Also write the offset-only stage");

  auto* decrypt = app.add_subcommand("decrypt", "Invert encrypt with the same key");
  decrypt->add_option("--in", in_path, "Input token file")->required();
  decrypt->add_option("--out", out_path, "Output token file")->required();
  decrypt->add_option("--key", key_path, "Key file")->required();

  // score
  Common c_score;
  std::string text;
  auto* score = app.add_subcommand("score", "Per-token surprisal of a text or token file");
  add_common(score, c_score);
  auto* text_opt = score->add_option("--text", text, "UTF-8 text");
  auto* in_opt = score->add_option("--in", in_path, "Token file");
  text_opt->excludes(in_opt);
  score->add_option("--scorer", scorer_opt, "builtin, or a scorer command line");
  score->add_option("--counts", counts_path, "Token file used as the unigram corpus");

  // detect
  double sigma_w2 = 1e-16, mu = 2.0, gain_w = 0.0, power = 0.0, epsilon = -1.0;
  auto* detect = app.add_subcommand("detect", "Optimal warden threshold and minimum detection error");
  detect->add_option("--sigma-w2", sigma_w2, "Nominal warden noise power (W)");
  detect->add_option("--mu", mu, "Noise uncertainty factor (> 1)");
  detect->add_option("--gain-w", gain_w, "Warden channel gain |h_w|^2")->required();
  detect->add_option("--power", power, "Transmit power (W)")->required();
  detect->add_option("--epsilon", epsilon, "Also report the covert power bound for this slack");

  // train
  Common c_train;
  std::string variant_opt, out_dir;
  std::uint64_t seed = 0;
  bool keep_transitions = false;
  auto* train = app.add_subcommand("train", "Train a policy (gppo, ppo or grpo)");
  add_common(train, c_train);
  train->add_option("--variant", variant_opt, "gppo, ppo or grpo");
  auto* seed_opt = train->add_option("--seed", seed, "Master seed (default: first configured seed)");
  train->add_option("--out", out_dir, "Output directory");
  train->add_flag("--transitions", keep_transitions, "Also write every committed transition");

  // evaluate
  Common c_eval;
  std::string ckpt_path;
  std::size_t n_states = 0;
  auto* evaluate = app.add_subcommand("evaluate", "Roll out a checkpoint on frozen states");
  add_common(evaluate, c_eval);
  evaluate->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  auto* eval_seed_opt = evaluate->add_option("--seed", seed, "Evaluation seed");
  evaluate->add_option("--states", n_states, "Number of frozen states");
  evaluate->add_option("--out", out_path, "Per-state CSV");
  evaluate->add_flag("--oracle", keep_transitions, "Also compare against the action-grid oracle");

  // oracle
  auto* oracle_cmd = app.add_subcommand("oracle", "Grid-search oracles");
  oracle_cmd->require_subcommand(1);
  std::size_t points = 100000;
  auto* threshold = oracle_cmd->add_subcommand("threshold", "Brute-force warden threshold search");
  threshold->add_option("--sigma-w2", sigma_w2, "Nominal warden noise power (W)");
  threshold->add_option("--mu", mu, "Noise uncertainty factor (> 1)");
  threshold->add_option("--gain-w", gain_w, "Warden channel gain")->required();
  threshold->add_option("--power", power, "Transmit power (W)")->required();
  threshold->add_option("--points", points, "Grid points");
  Common c_actions;
  auto* actions = oracle_cmd->add_subcommand("actions", "Per-state optimal action on frozen states");
  add_common(actions, c_actions);
  auto* act_seed_opt = actions->add_option("--seed", seed, "Evaluation seed");
  actions->add_option("--states", n_states, "Number of frozen states");
  actions->add_option("--out", out_path, "Per-state CSV (default: stdout)");

  // sweep
  Common c_sweep;
  std::string family_opt;
  std::vector<double> values, values2;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  auto* sweep_cmd = app.add_subcommand("sweep", "Latency tables over F_min, 1 - epsilon, or (mu, P_max)");
  add_common(sweep_cmd, c_sweep);
  sweep_cmd->add_option("--family", family_opt, "fidelity, covert or mu-pmax")->required();
  sweep_cmd->add_option("--values", values, "Sweep values (F_min, 1 - epsilon, or mu)");
  sweep_cmd->add_option("--values2", values2, "P_max values in dBm (mu-pmax)");
  sweep_cmd->add_option("--variants", variants, "Variants to train");
  sweep_cmd->add_option("--seeds", seeds, "Seeds (default: configured seeds)");
  sweep_cmd->add_option("--out", out_path, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*compress) {
    auto cfg = load_config(c_compress);
    const auto tokens = pcae::read_tokens(in_path);
    pcae::CompressionConfig cc{kappa > 0 ? kappa : cfg.kappa, head >= 0 ? static_cast<std::size_t>(head) : cfg.env.head,
                               tail >= 0 ? static_cast<std::size_t>(tail) : cfg.env.tail};
    cc.validate();
    const auto scores = score_sequence(tokens, scorer_opt.empty() ? cfg.scorer : scorer_opt, counts_path);
    const auto positions = pcae::select_positions(tokens, scores, cc);
    pcae::TokenSequence out{{}, tokens.vocab_size};
    for (auto p : positions) out.ids.push_back(tokens.ids[p]);
    pcae::write_tokens(out_path, out);
    if (!positions_path.empty()) {
      std::ostringstream ss;
      for (auto p : positions) ss << p << '\n';
      write_text(positions_path, ss.str());
    }
    std::cout << "L=" << tokens.size() << " L_prime=" << out.size() << "\n";
    return 0;
  }

  if (*encrypt) {
    auto cfg = load_config(c_crypt);
    const auto tokens = pcae::read_tokens(in_path);
    pcae::EncryptionKey key;
    if (new_key) {
      Rng rng = Rng(key_seed).substream("key");
      key = pcae::generate_key(tokens.size(), tokens.vocab_size, r_min >= 0 ? r_min : cfg.r_min,
                               r_max >= 0 ? r_max : cfg.r_max, rng);
      pcae::write_key(key_path, key);
    } else {
      key = pcae::read_key(key_path);
    }
    if (!offset_stage_path.empty()) pcae::write_tokens(offset_stage_path, pcae::apply_offsets(tokens, key));
    pcae::write_tokens(out_path, pcae::encrypt(tokens, key));
    return 0;
  }

  if (*decrypt) {
    pcae::write_tokens(out_path, pcae::decrypt(pcae::read_tokens(in_path), pcae::read_key(key_path)));
    return 0;
  }

  if (*score) {
    auto cfg = load_config(c_score);
    const std::string which = scorer_opt.empty() ? cfg.scorer : scorer_opt;
    std::vector<std::int64_t> ids;
    std::vector<double> s;
    if (which != "builtin") {
      auto client = scorer::ScorerClient::launch_command(which);
      client.handshake();
      scorer::ScoreReply r;
      if (!text.empty() || in_path.empty()) {
        r = client.score_text(text);
      } else {
        r = client.score_tokens(pcae::read_tokens(in_path).ids);
      }
      ids = r.token_ids;
      s = r.surprisals;
    } else {
      pcae::TokenSequence tokens;
      if (!in_path.empty()) {
        tokens = pcae::read_tokens(in_path);
      } else {
        pcae::Vocabulary vocab;
        tokens = vocab.encode(text, true);
        if (tokens.ids.empty()) throw DomainError("score: empty input");
      }
      ids = tokens.ids;
      s = score_sequence(tokens, "builtin", counts_path).scores;
    }
    std::cout << "position,token_id,surprisal\n";
    for (std::size_t l = 0; l < ids.size(); ++l) {
      std::cout << l << ',' << ids[l] << ',' << (l == 0 ? std::string("NA") : fmt(s[l - 1])) << '\n';
    }
    return 0;
  }

  if (*detect) {
    const detection::DetectionContext ctx{sigma_w2, mu, gain_w, power};
    const auto r = detection::analyze(ctx);
    std::cout << "tau_star=" << fmt(r.tau_star) << "\n"
              << "xi_star=" << fmt(detection::min_total_error(ctx)) << "\n"
              << "p_fa=" << fmt(r.p_fa_at_star) << "\n"
              << "p_md=" << fmt(r.p_md_at_star) << "\n";
    if (epsilon > 0) {
      std::cout << "max_covert_power=" << fmt(detection::max_covert_power(sigma_w2, mu, gain_w, epsilon)) << "\n";
    }
    return 0;
  }

  if (*train) {
    auto cfg = load_config(c_train);
    const auto variant = gppo::variant_from_name(variant_opt.empty() ? cfg.variant : variant_opt);
    const std::uint64_t s = seed_opt->count() ? seed : cfg.seeds.front();
    const fs::path dir = out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(out_dir);
    fs::create_directories(dir);
    config::save((dir / "config.json").string(), cfg);

    gppo::CovertTrainingEnv env(cfg.env, s);
    env.keep_transitions(keep_transitions);
    auto result = gppo::train(env, cfg.gppo, variant, s);
    {
      std::ofstream out(dir / "curve.csv");
      gppo::write_curve_csv(out, result.curve);
    }
    if (keep_transitions) {
      std::ofstream out(dir / "transitions.csv");
      env::write_transitions_csv(out, env.transitions());
    }
    nlohmann::ordered_json meta{{"seed", s}, {"variant", gppo::variant_name(variant)}};
    gppo::save_checkpoint((dir / "checkpoint.bin").string(), result.state, meta.dump());
    write_sidecar(dir, "train");
    const auto& last = result.curve.back();
    std::cout << "variant=" << gppo::variant_name(variant) << " seed=" << s
              << " iterations=" << result.curve.size() << " reward_mean=" << fmt(last.reward_mean)
              << " latency_mean=" << fmt(last.latency_mean) << " violation_rate=" << fmt(last.violation_rate)
              << "\n";
    return 0;
  }

  if (*evaluate) {
    auto cfg = load_config(c_eval);
    const auto st = gppo::load_checkpoint(ckpt_path);
    if (st.policy.M != cfg.env.M()) throw ConfigError("checkpoint and config disagree on the number of levels");
    const std::uint64_t s = eval_seed_opt->count() ? seed : cfg.seeds.front();
    const std::size_t n = n_states ? n_states : cfg.eval_states;
    const env::CovertEnv e(cfg.env, s);
    const auto states = oracle::frozen_scenarios(cfg.env, s, n);
    const auto ev = oracle::evaluate_policy(st.policy, e, states);
    if (!out_path.empty()) {
      std::vector<env::Transition> rows;
      for (std::size_t i = 0; i < states.size(); ++i) {
        env::Transition t;
        t.step = static_cast<int>(i);
        t.info = ev.per_state[i];
        t.reward = t.info.reward();
        for (int m = 0; m < cfg.env.M(); ++m) {
          if (cfg.env.kappa_levels[static_cast<std::size_t>(m)] == t.info.kappa) t.action.m = m;
        }
        rows.push_back(t);
      }
      std::ofstream out(out_path);
      env::write_transitions_csv(out, rows);
    }
    std::cout << "states=" << ev.n << " mean_latency=" << fmt(ev.mean_latency)
              << " violation_rate=" << fmt(ev.violation_rate) << " mean_reward=" << fmt(ev.mean_reward)
              << " mean_fidelity=" << fmt(ev.mean_fidelity) << " mean_xi=" << fmt(ev.mean_xi) << "\n";
    if (keep_transitions) {
      const auto g = oracle::compare_to_oracle(st.policy, e, states, cfg.oracle_power_points);
      std::cout << "oracle_feasible=" << g.n_feasible << " oracle_latency=" << fmt(g.oracle_latency)
                << " policy_latency=" << fmt(g.policy_latency) << " gap=" << fmt(g.gap)
                << " violation_rate_feasible=" << fmt(g.violation_rate) << "\n";
    }
    return 0;
  }

  if (*oracle_cmd) {
    if (*threshold) {
      const detection::DetectionContext ctx{sigma_w2, mu, gain_w, power};
      const auto r = oracle::threshold_grid(ctx, points);
      std::cout << "tau_argmin=" << fmt(r.tau_argmin) << "\n"
                << "xi_min=" << fmt(r.xi_min) << "\n"
                << "grid_step=" << fmt(r.step) << "\n"
                << "tau_star=" << fmt(detection::optimal_threshold(ctx)) << "\n"
                << "xi_star=" << fmt(detection::min_total_error(ctx)) << "\n";
      return 0;
    }
    auto cfg = load_config(c_actions);
    const std::uint64_t s = act_seed_opt->count() ? seed : cfg.seeds.front();
    const std::size_t n = n_states ? n_states : cfg.eval_states;
    const env::CovertEnv e(cfg.env, s);
    const auto states = oracle::frozen_scenarios(cfg.env, s, n);
    std::ofstream file;
    if (!out_path.empty()) file.open(out_path);
    std::ostream& out = out_path.empty() ? std::cout : file;
    out << "state,feasible,m,kappa,P_t,latency\n";
    std::size_t feasible = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const auto o = oracle::action_grid(e, states[i], cfg.oracle_power_points);
      if (!o.feasible) {
        out << i << ",0,NA,NA,NA,NA\n";
        continue;
      }
      ++feasible;
      total += o.latency;
      out << i << ",1," << o.m << ',' << fmt(cfg.env.kappa_levels[static_cast<std::size_t>(o.m)]) << ','
          << fmt(o.P_t) << ',' << fmt(o.latency) << '\n';
    }
    std::cerr << "feasible=" << feasible << "/" << states.size()
              << " mean_latency=" << (feasible ? fmt(total / static_cast<double>(feasible)) : "NA") << "\n";
    return 0;
  }

  if (*sweep_cmd) {
    auto cfg = load_config(c_sweep);
    const auto family = sweep::family_from_name(family_opt);
    auto spec = sweep::SweepSpec::defaults(family);
    if (!values.empty()) spec.values = values;
    if (!values2.empty()) spec.values2 = values2;
    if (!variants.empty()) {
      spec.variants.clear();
      for (const auto& v : variants) spec.variants.push_back(gppo::variant_from_name(v));
    }
    spec.seeds = seeds;
    const auto rows = sweep::run_sweep(cfg, spec, [](const sweep::SweepRow& r) {
      std::cerr << gppo::variant_name(r.variant) << " value=" << fmt(r.value)
                << (r.value2 ? " value2=" + fmt(*r.value2) : std::string()) << " seed=" << r.seed
                << (r.missing ? " FAILED: " + r.error : " mean_latency=" + fmt(r.mean_latency)) << "\n";
    });
    std::ofstream out(out_path);
    if (!out) throw FormatError("cannot write " + out_path);
    sweep::write_sweep_csv(out, family, rows);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
