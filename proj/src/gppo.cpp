#include "covert/gppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "covert/detection.hpp"
#include "covert/errors.hpp"

namespace covert::gppo {

using nn::MatrixXd;
using nn::VectorXd;

Variant variant_from_name(const std::string& name) {
  if (name == "gppo") return Variant::GPPO;
  if (name == "ppo") return Variant::PPO;
  if (name == "grpo") return Variant::GRPO;
  throw ConfigError("unknown variant '" + name + "' (expected gppo, ppo or grpo)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::GPPO: return "gppo";
    case Variant::PPO: return "ppo";
    case Variant::GRPO: return "grpo";
  }
  return "gppo";
}

void HyperParams::validate() const {
  if (G < 1) throw ConfigError("gppo: G must be >= 1");
  if (!(eps_clip > 0 && eps_clip < 1)) throw ConfigError("gppo: eps_clip must be in (0, 1)");
  if (!(beta_kl >= 0)) throw ConfigError("gppo: beta_kl must be >= 0");
  if (!(gamma >= 0 && gamma <= 1)) throw ConfigError("gppo: gamma must be in [0, 1]");
  if (!(lam >= 0 && lam <= 1)) throw ConfigError("gppo: lam must be in [0, 1]");
  if (!(lr >= 0)) throw ConfigError("gppo: lr must be >= 0");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("gppo: lr_decay must be in (0, 1]");
  if (total_steps < 1 || rollout < 1 || minibatch < 1 || epochs < 1) {
    throw ConfigError("gppo: steps, rollout, minibatch and epochs must be >= 1");
  }
  if (hidden < 1 || hidden_layers < 1) throw ConfigError("gppo: network sizes must be >= 1");
  if (!(max_grad_norm >= 0)) throw ConfigError("gppo: max_grad_norm must be >= 0");
  if (!(log_std_min < log_std_max)) throw ConfigError("gppo: log-std bounds are inverted");
  if (!(target_kl >= 0)) throw ConfigError("gppo: target_kl must be >= 0");
}

// -- policy ----------------------------------------------------------------

namespace {

std::vector<int> layer_sizes(int in, int hidden, int layers, int out) {
  std::vector<int> s{in};
  for (int i = 0; i < layers; ++i) s.push_back(hidden);
  s.push_back(out);
  return s;
}

MatrixXd column(const Features& s) {
  MatrixXd x(4, 1);
  for (int i = 0; i < 4; ++i) x(i, 0) = s[static_cast<std::size_t>(i)];
  return x;
}

MatrixXd stack(std::span<const Sample> batch) {
  MatrixXd x(4, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    for (int i = 0; i < 4; ++i) x(i, static_cast<Eigen::Index>(j)) = batch[j].s[static_cast<std::size_t>(i)];
  }
  return x;
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// log-softmax of column j of `out` over the first M rows.
double log_softmax_at(const MatrixXd& out, Eigen::Index j, int M, int m, std::vector<double>* probs) {
  double zmax = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < M; ++k) zmax = std::max(zmax, out(k, j));
  double sum = 0.0;
  for (int k = 0; k < M; ++k) sum += std::exp(out(k, j) - zmax);
  const double lse = zmax + std::log(sum);
  if (probs) {
    probs->resize(static_cast<std::size_t>(M));
    for (int k = 0; k < M; ++k) (*probs)[static_cast<std::size_t>(k)] = std::exp(out(k, j) - lse);
  }
  return out(m, j) - lse;
}

}  // namespace

double squash_log_std(double raw, double lo, double hi) { return lo + 0.5 * (hi - lo) * (std::tanh(raw) + 1.0); }

double unsquash_log_std(double log_std, double lo, double hi) {
  if (!(log_std > lo && log_std < hi)) throw DomainError("unsquash_log_std: value must lie strictly inside the bounds");
  return std::atanh(2.0 * (log_std - lo) / (hi - lo) - 1.0);
}

PolicyParams PolicyParams::create(int M, const HyperParams& hp, double x_init, Rng& rng) {
  if (M < 1) throw ConfigError("policy: need at least one compression level");
  PolicyParams p;
  p.M = M;
  p.actor = nn::Mlp(layer_sizes(4, hp.hidden, hp.hidden_layers, M + 2));
  p.critic = nn::Mlp(layer_sizes(4, hp.hidden, hp.hidden_layers, 1));
  p.theta = p.actor.init(rng);
  p.lambda = p.critic.init(rng);
  const int last = p.actor.num_layers() - 1;
  p.theta[p.actor.bias_offset(last) + M] = x_init;
  p.log_std_min = hp.log_std_min;
  p.log_std_max = hp.log_std_max;
  p.theta[p.actor.bias_offset(last) + M + 1] =
      unsquash_log_std(std::clamp(0.0, hp.log_std_min + 1e-3, hp.log_std_max - 1e-3), hp.log_std_min, hp.log_std_max);
  return p;
}

PolicyOutput policy_output(const PolicyParams& p, const Features& s) {
  const MatrixXd out = p.actor.forward(p.theta, column(s));
  PolicyOutput o;
  o.logits.resize(static_cast<std::size_t>(p.M));
  for (int k = 0; k < p.M; ++k) o.logits[static_cast<std::size_t>(k)] = out(k, 0);
  o.mean = out(p.M, 0);
  const double raw = out(p.M + 1, 0);
  o.log_std = squash_log_std(raw, p.log_std_min, p.log_std_max);
  if (!out.allFinite()) throw TrainingFault("actor produced a non-finite output");
  return o;
}

double log_prob(const PolicyOutput& out, const Action& a) {
  const int M = static_cast<int>(out.logits.size());
  if (a.m < 0 || a.m >= M) throw DomainError("log_prob: level index out of range");
  const double zmax = *std::max_element(out.logits.begin(), out.logits.end());
  double sum = 0.0;
  for (double z : out.logits) sum += std::exp(z - zmax);
  const double lp_m = out.logits[static_cast<std::size_t>(a.m)] - zmax - std::log(sum);
  const double sd = std::exp(out.log_std);
  const double u = (a.x_pow - out.mean) / sd;
  return lp_m - 0.5 * u * u - out.log_std - kHalfLog2Pi;
}

std::vector<ActionSample> sample_group(const PolicyParams& p, const Features& s, int G, Rng& rng) {
  if (G < 1) throw DomainError("sample_group: G must be >= 1");
  const PolicyOutput out = policy_output(p, s);
  const double zmax = *std::max_element(out.logits.begin(), out.logits.end());
  std::vector<double> w(out.logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) total += (w[k] = std::exp(out.logits[k] - zmax));
  const double sd = std::exp(out.log_std);
  std::vector<ActionSample> group;
  group.reserve(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    const double u = rng.uniform() * total;
    double acc = 0.0;
    int m = p.M - 1;
    for (int k = 0; k < p.M; ++k) {
      acc += w[static_cast<std::size_t>(k)];
      if (u < acc) {
        m = k;
        break;
      }
    }
    ActionSample smp;
    smp.action = {m, out.mean + sd * rng.normal()};
    smp.log_prob = log_prob(out, smp.action);
    group.push_back(smp);
  }
  return group;
}

Action deterministic_action(const PolicyParams& p, const Features& s) {
  const PolicyOutput out = policy_output(p, s);
  const auto m = static_cast<int>(std::max_element(out.logits.begin(), out.logits.end()) - out.logits.begin());
  return {m, out.mean};
}

double value(const PolicyParams& p, const Features& s) {
  const MatrixXd v = p.critic.forward(p.lambda, column(s));
  if (!std::isfinite(v(0, 0))) throw TrainingFault("critic produced a non-finite value");
  return v(0, 0);
}

double level_probability(const PolicyParams& p, const Features& s, int m) {
  const MatrixXd out = p.actor.forward(p.theta, column(s));
  return std::exp(log_softmax_at(out, 0, p.M, m, nullptr));
}

// -- estimators ------------------------------------------------------------

double td_error(double r, double v_next, double v, double gamma) { return r + gamma * v_next - v; }

double gae(std::span<const double> deltas, double gamma, double lam) {
  if (deltas.empty()) throw DomainError("gae: need at least one TD error");
  double a = 0.0;
  for (std::size_t i = deltas.size(); i-- > 0;) a = deltas[i] + gamma * lam * a;
  return a;
}

std::vector<double> normalize_group(std::span<const double> a) {
  if (a.empty()) throw DomainError("normalize_group: empty group");
  const double n = static_cast<double>(a.size());
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(a.size(), 0.0);
  if (!(sd >= 1e-8)) return out;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] - mean) / sd;
  return out;
}

std::size_t select_best(std::span<const double> rewards) {
  if (rewards.empty()) throw DomainError("select_best: empty group");
  return static_cast<std::size_t>(std::max_element(rewards.begin(), rewards.end()) - rewards.begin());
}

LossValue actor_loss(double lp_new, double lp_old, double adv, double eps_clip, double beta_kl) {
  const double d = lp_new - lp_old;
  const double rho = std::exp(d);
  const double unclipped = rho * adv;
  const double clipped = std::clamp(rho, 1.0 - eps_clip, 1.0 + eps_clip) * adv;
  LossValue v;
  double d_obj;
  if (unclipped <= clipped) {
    v.loss = -(unclipped - beta_kl * d);
    d_obj = unclipped;
  } else {
    v.loss = -(clipped - beta_kl * d);
    // The clipped branch is only selected when rho lies outside the band.
    d_obj = 0.0;
  }
  v.grad = -(d_obj - beta_kl);
  return v;
}

LossValue critic_loss(double v_pred, double v_target) {
  const double e = v_pred - v_target;
  return {e * e, 2.0 * e};
}

double actor_batch_loss(const PolicyParams& p, const VectorXd& theta, std::span<const Sample> batch,
                        double eps_clip, double beta_kl, VectorXd* grad, double* kl) {
  if (batch.empty()) throw DomainError("actor_batch_loss: empty batch");
  nn::Mlp::Cache cache;
  const MatrixXd out = p.actor.forward(theta, stack(batch), grad ? &cache : nullptr);
  if (!out.allFinite()) throw TrainingFault("actor produced a non-finite output");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  MatrixXd d_out = MatrixXd::Zero(out.rows(), out.cols());
  double total = 0.0;
  double kl_sum = 0.0;
  std::vector<double> probs;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const Sample& smp = batch[j];
    const double lp_m = log_softmax_at(out, jj, p.M, smp.a.m, &probs);
    const double raw_ls = out(p.M + 1, jj);
    const double th = std::tanh(raw_ls);
    const double ls = p.log_std_min + 0.5 * (p.log_std_max - p.log_std_min) * (th + 1.0);
    const double sd = std::exp(ls);
    const double u = (smp.a.x_pow - out(p.M, jj)) / sd;
    const double lp = lp_m - 0.5 * u * u - ls - kHalfLog2Pi;
    const LossValue lv = actor_loss(lp, smp.log_prob_old, smp.adv, eps_clip, beta_kl);
    total += lv.loss;
    const double d = lp - smp.log_prob_old;
    kl_sum += std::expm1(d) - d;
    if (!grad) continue;
    const double g = lv.grad * inv_n;
    for (int k = 0; k < p.M; ++k) {
      d_out(k, jj) = g * ((k == smp.a.m ? 1.0 : 0.0) - probs[static_cast<std::size_t>(k)]);
    }
    d_out(p.M, jj) = g * u / sd;
    d_out(p.M + 1, jj) = g * (u * u - 1.0) * 0.5 * (p.log_std_max - p.log_std_min) * (1.0 - th * th);
  }
  if (grad) p.actor.backward(theta, cache, d_out, *grad);
  if (kl) *kl = kl_sum * inv_n;
  return total * inv_n;
}

double critic_batch_loss(const PolicyParams& p, const VectorXd& lambda, std::span<const Sample> batch,
                         VectorXd* grad) {
  if (batch.empty()) throw DomainError("critic_batch_loss: empty batch");
  nn::Mlp::Cache cache;
  const MatrixXd out = p.critic.forward(lambda, stack(batch), grad ? &cache : nullptr);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  MatrixXd d_out(1, out.cols());
  double total = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const LossValue lv = critic_loss(out(0, jj), batch[j].v_target);
    total += lv.loss;
    d_out(0, jj) = lv.grad * inv_n;
  }
  if (grad) p.critic.backward(lambda, cache, d_out, *grad);
  return total * inv_n;
}

// -- environment adapter ---------------------------------------------------

CovertTrainingEnv::CovertTrainingEnv(env::EnvConfig cfg, std::uint64_t seed) : env_(std::move(cfg), seed) {}

double CovertTrainingEnv::initial_power_mean() const {
  const auto& c = env_.config();
  return env::inverse_map_power(std::min(c.effective_probe_power(), c.P_max / 2.0), c.P_max);
}

Features CovertTrainingEnv::reset() { return env::features(env_.reset(), env_.config()); }

std::vector<Outcome> CovertTrainingEnv::evaluate_group(std::span<const Action> actions) {
  const auto group = env_.evaluate_group(actions);
  std::vector<Outcome> out;
  out.reserve(group.size());
  for (const auto& g : group) {
    Outcome o;
    o.reward = g.reward;
    o.next = env::features(g.next_state, env_.config());
    o.latency = g.info.L_T;
    o.fidelity = g.info.F_t;
    o.xi = g.info.xi_star;
    o.violated = !g.info.feasible();
    out.push_back(o);
  }
  return out;
}

bool CovertTrainingEnv::commit(std::size_t g) {
  auto t = env_.commit(g);
  const bool done = t.done;
  if (keep_) log_.push_back(std::move(t));
  return done;
}

// -- training --------------------------------------------------------------

HyperParams effective_hyper(const HyperParams& hp, Variant v) {
  HyperParams h = hp;
  if (v == Variant::PPO) {
    h.G = 1;
    h.beta_kl = 0.0;
  } else if (v == Variant::GRPO) {
    h.beta_kl = 0.0;
  }
  return h;
}

TrainState init_training(TrainingEnv& env, const HyperParams& hp_in, Variant v, std::uint64_t seed) {
  TrainState st;
  st.variant = v;
  st.hp = effective_hyper(hp_in, v);
  st.hp.validate();
  const Rng master(seed);
  Rng init_rng = master.substream("policy");
  st.policy = PolicyParams::create(env.num_levels(), st.hp, env.initial_power_mean(), init_rng);
  st.actor_opt = nn::Optimizer(st.hp.optimizer, st.policy.theta.size());
  st.critic_opt = nn::Optimizer(st.hp.optimizer, st.policy.lambda.size());
  st.actor_opt.max_grad_norm = st.hp.max_grad_norm;
  st.critic_opt.max_grad_norm = st.hp.max_grad_norm;
  st.sample_rng = master.substream("sample");
  st.shuffle_rng = master.substream("shuffle");
  st.lr = st.hp.lr;
  return st;
}

namespace {

struct StepRecord {
  Features s;
  std::vector<ActionSample> acts;
  std::vector<Outcome> out;
  std::size_t committed = 0;
  bool done = false;
};

void check_params(const TrainState& st) {
  auto bad = [](const VectorXd& v) { return !v.allFinite() || v.cwiseAbs().mean() > 1e6; };
  if (bad(st.policy.theta)) {
    throw TrainingFault("actor parameters diverged at iteration " + std::to_string(st.iteration) +
                        " (mean |theta| = " + std::to_string(st.policy.theta.cwiseAbs().mean()) + ")");
  }
  if (bad(st.policy.lambda)) {
    throw TrainingFault("critic parameters diverged at iteration " + std::to_string(st.iteration));
  }
}

VectorXd batch_values(const PolicyParams& p, const std::vector<Features>& xs) {
  MatrixXd x(4, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t j = 0; j < xs.size(); ++j) {
    for (int i = 0; i < 4; ++i) x(i, static_cast<Eigen::Index>(j)) = xs[j][static_cast<std::size_t>(i)];
  }
  const MatrixXd v = p.critic.forward(p.lambda, x);
  if (!v.allFinite()) throw TrainingFault("critic produced a non-finite value");
  return v.row(0).transpose();
}

std::vector<Sample> build_samples(const TrainState& st, const std::vector<StepRecord>& recs) {
  const auto& hp = st.hp;
  const std::size_t T = recs.size();
  std::vector<Sample> samples;

  if (st.variant == Variant::GRPO) {
    for (const auto& r : recs) {
      std::vector<double> rewards;
      for (const auto& o : r.out) rewards.push_back(o.reward);
      const auto adv = normalize_group(rewards);
      for (std::size_t g = 0; g < r.acts.size(); ++g) {
        samples.push_back({r.s, r.acts[g].action, r.acts[g].log_prob, adv[g], 0.0});
      }
    }
    return samples;
  }

  std::vector<Features> states;
  for (const auto& r : recs) states.push_back(r.s);
  const VectorXd v_s = batch_values(st.policy, states);

  // V(s'_g), needed only when bootstrapping.
  std::vector<std::vector<double>> v_next(T);
  if (hp.gamma > 0) {
    std::vector<Features> nexts;
    for (const auto& r : recs) {
      for (const auto& o : r.out) nexts.push_back(o.next);
    }
    const VectorXd vn = batch_values(st.policy, nexts);
    std::size_t k = 0;
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t g = 0; g < recs[t].out.size(); ++g) v_next[t].push_back(vn[static_cast<Eigen::Index>(k++)]);
    }
  }

  // A_{t,g} = delta_{t,g} + gamma lam A_{t+1, committed}, cut at episode and rollout ends.
  std::vector<std::vector<double>> adv(T);
  double carry = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    const auto& r = recs[t];
    const double cont = (t + 1 < T && !r.done) ? hp.gamma * hp.lam * carry : 0.0;
    adv[t].resize(r.out.size());
    for (std::size_t g = 0; g < r.out.size(); ++g) {
      const double vn = hp.gamma > 0 ? v_next[t][g] : 0.0;
      adv[t][g] = td_error(r.out[g].reward, vn, v_s[static_cast<Eigen::Index>(t)], hp.gamma) + cont;
    }
    carry = adv[t][r.committed];
  }

  for (std::size_t t = 0; t < T; ++t) {
    const auto& r = recs[t];
    const std::size_t g = r.committed;
    const double vn = hp.gamma > 0 ? v_next[t][g] : 0.0;
    const double a_bar = hp.G > 1 ? normalize_group(adv[t])[g] : adv[t][g];
    samples.push_back({r.s, r.acts[g].action, r.acts[g].log_prob, a_bar, r.out[g].reward + hp.gamma * vn});
  }
  if (hp.G == 1) {
    // A single-sample group standardises to zero; standardise over the rollout.
    std::vector<double> a;
    for (const auto& s : samples) a.push_back(s.adv);
    const auto na = normalize_group(a);
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i].adv = na[i];
  }
  return samples;
}

}  // namespace

std::vector<CurvePoint> resume(TrainingEnv& env, TrainState& st, int iterations) {
  const auto& hp = st.hp;
  const bool use_critic = st.variant != Variant::GRPO;
  std::vector<CurvePoint> curve;
  Features s = env.reset();

  for (int it = 0; it < iterations; ++it) {
    std::vector<StepRecord> recs;
    recs.reserve(static_cast<std::size_t>(hp.rollout));
    CurvePoint cp;
    cp.iteration = st.iteration;
    cp.lr = st.lr;
    std::size_t n_finite = 0;
    for (int step = 0; step < hp.rollout; ++step) {
      StepRecord r;
      r.s = s;
      r.acts = sample_group(st.policy, s, hp.G, st.sample_rng);
      std::vector<Action> actions;
      for (const auto& a : r.acts) actions.push_back(a.action);
      r.out = env.evaluate_group(actions);
      if (r.out.size() != actions.size()) throw StateError("environment returned the wrong group size");
      if (st.variant != Variant::GRPO) {
        std::vector<double> rewards;
        for (const auto& o : r.out) rewards.push_back(o.reward);
        r.committed = select_best(rewards);
      }
      r.done = env.commit(r.committed);
      const Outcome& o = r.out[r.committed];
      cp.reward_mean += o.reward;
      if (std::isfinite(o.latency)) {
        cp.latency_mean += o.latency;
        ++n_finite;
      }
      cp.fidelity_mean += o.fidelity;
      cp.xi_mean += o.xi;
      cp.violation_rate += o.violated ? 1.0 : 0.0;
      s = o.next;
      recs.push_back(std::move(r));
    }
    const double n = static_cast<double>(hp.rollout);
    cp.reward_mean /= n;
    cp.latency_mean = n_finite ? cp.latency_mean / static_cast<double>(n_finite)
                               : std::numeric_limits<double>::quiet_NaN();
    cp.fidelity_mean /= n;
    cp.xi_mean /= n;
    cp.violation_rate /= n;

    std::vector<Sample> samples = build_samples(st, recs);
    std::vector<std::size_t> order(samples.size());
    std::vector<Sample> mb;
    bool actor_frozen = false;
    for (int ep = 0; ep < hp.epochs; ++ep) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(st.shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
        std::swap(order[i - 1], order[j]);
      }
      for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(hp.minibatch)) {
        const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(hp.minibatch));
        mb.clear();
        for (std::size_t k = b; k < e; ++k) mb.push_back(samples[order[k]]);
        if (!actor_frozen) {
          VectorXd ga = VectorXd::Zero(st.policy.theta.size());
          double kl = 0.0;
          const double la = actor_batch_loss(st.policy, st.policy.theta, mb, hp.eps_clip, hp.beta_kl, &ga, &kl);
          if (!std::isfinite(la) || !ga.allFinite()) {
            throw TrainingFault("non-finite actor loss at iteration " + std::to_string(st.iteration));
          }
          if (hp.target_kl > 0 && kl > 1.5 * hp.target_kl) {
            actor_frozen = true;
          } else {
            st.actor_opt.step(st.policy.theta, ga, st.lr);
          }
        }
        if (use_critic) {
          VectorXd gc = VectorXd::Zero(st.policy.lambda.size());
          const double lc = critic_batch_loss(st.policy, st.policy.lambda, mb, &gc);
          if (!std::isfinite(lc) || !gc.allFinite()) {
            throw TrainingFault("non-finite critic loss at iteration " + std::to_string(st.iteration));
          }
          st.critic_opt.step(st.policy.lambda, gc, st.lr);
        }
      }
    }
    check_params(st);
    curve.push_back(cp);
    st.lr *= hp.lr_decay;
    ++st.iteration;
  }
  return curve;
}

TrainResult train(TrainingEnv& env, const HyperParams& hp, Variant v, std::uint64_t seed) {
  TrainResult r;
  r.state = init_training(env, hp, v, seed);
  r.curve = resume(env, r.state, r.state.hp.iterations());
  return r;
}

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve) {
  out << "iteration,reward_mean,latency_mean,fidelity_mean,xi_mean,violation_rate,lr\n";
  char buf[256];
  for (const auto& c : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", c.iteration, c.reward_mean,
                  c.latency_mean, c.fidelity_mean, c.xi_mean, c.violation_rate, c.lr);
    out << buf;
  }
}

// -- checkpoints -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', 'O', 'V', 'C', 'K', 'P', 'T', '1'};
constexpr int kCheckpointVersion = 1;

nlohmann::ordered_json hyper_json(const HyperParams& h) {
  return {{"G", h.G},
          {"eps_clip", h.eps_clip},
          {"beta_kl", h.beta_kl},
          {"gamma", h.gamma},
          {"lam", h.lam},
          {"lr", h.lr},
          {"lr_decay", h.lr_decay},
          {"total_steps", h.total_steps},
          {"rollout", h.rollout},
          {"minibatch", h.minibatch},
          {"epochs", h.epochs},
          {"hidden", h.hidden},
          {"hidden_layers", h.hidden_layers},
          {"optimizer", nn::optimizer_name(h.optimizer)},
          {"max_grad_norm", h.max_grad_norm},
          {"log_std_min", h.log_std_min},
          {"log_std_max", h.log_std_max},
          {"target_kl", h.target_kl}};
}

HyperParams hyper_from(const nlohmann::json& j) {
  HyperParams h;
  h.G = j.at("G").get<int>();
  h.eps_clip = j.at("eps_clip").get<double>();
  h.beta_kl = j.at("beta_kl").get<double>();
  h.gamma = j.at("gamma").get<double>();
  h.lam = j.at("lam").get<double>();
  h.lr = j.at("lr").get<double>();
  h.lr_decay = j.at("lr_decay").get<double>();
  h.total_steps = j.at("total_steps").get<long long>();
  h.rollout = j.at("rollout").get<int>();
  h.minibatch = j.at("minibatch").get<int>();
  h.epochs = j.at("epochs").get<int>();
  h.hidden = j.at("hidden").get<int>();
  h.hidden_layers = j.at("hidden_layers").get<int>();
  h.optimizer = nn::optimizer_from_name(j.at("optimizer").get<std::string>());
  h.max_grad_norm = j.at("max_grad_norm").get<double>();
  h.log_std_min = j.at("log_std_min").get<double>();
  h.log_std_max = j.at("log_std_max").get<double>();
  h.target_kl = j.at("target_kl").get<double>();
  return h;
}

void write_vec(std::ostream& out, const VectorXd& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_vec(std::istream& in, VectorXd& v, Eigen::Index n) {
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw FormatError("checkpoint: truncated parameter block");
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& st, const std::string& metadata_json) {
  nlohmann::ordered_json h;
  h["version"] = kCheckpointVersion;
  h["variant"] = variant_name(st.variant);
  h["M"] = st.policy.M;
  h["iteration"] = st.iteration;
  h["lr"] = st.lr;
  h["hyper"] = hyper_json(st.hp);
  h["actor_sizes"] = st.policy.actor.sizes();
  h["critic_sizes"] = st.policy.critic.sizes();
  h["actor_opt_t"] = st.actor_opt.t;
  h["critic_opt_t"] = st.critic_opt.t;
  h["sample_rng"] = st.sample_rng.serialize();
  h["shuffle_rng"] = st.shuffle_rng.serialize();
  try {
    h["metadata"] = nlohmann::ordered_json::parse(metadata_json);
  } catch (const nlohmann::json::exception&) {
    throw FormatError("checkpoint: metadata is not valid JSON");
  }
  const std::string header = h.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_vec(out, st.policy.theta);
  write_vec(out, st.policy.lambda);
  write_vec(out, st.actor_opt.m);
  write_vec(out, st.actor_opt.v);
  write_vec(out, st.critic_opt.m);
  write_vec(out, st.critic_opt.v);
  if (!out) throw FormatError("failed writing checkpoint " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError("not a checkpoint file: " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 24)) throw FormatError("checkpoint: bad header length");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("checkpoint: truncated header");

  TrainState st;
  try {
    const auto h = nlohmann::json::parse(header);
    if (h.at("version").get<int>() != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
    st.variant = variant_from_name(h.at("variant").get<std::string>());
    st.hp = hyper_from(h.at("hyper"));
    st.iteration = h.at("iteration").get<int>();
    st.lr = h.at("lr").get<double>();
    st.policy.M = h.at("M").get<int>();
    st.policy.actor = nn::Mlp(h.at("actor_sizes").get<std::vector<int>>());
    st.policy.critic = nn::Mlp(h.at("critic_sizes").get<std::vector<int>>());
    st.policy.log_std_min = st.hp.log_std_min;
    st.policy.log_std_max = st.hp.log_std_max;
    st.actor_opt = nn::Optimizer(st.hp.optimizer, st.policy.actor.num_params());
    st.critic_opt = nn::Optimizer(st.hp.optimizer, st.policy.critic.num_params());
    st.actor_opt.max_grad_norm = st.critic_opt.max_grad_norm = st.hp.max_grad_norm;
    st.actor_opt.t = h.at("actor_opt_t").get<long long>();
    st.critic_opt.t = h.at("critic_opt_t").get<long long>();
    st.sample_rng.deserialize(h.at("sample_rng").get<std::string>());
    st.shuffle_rng.deserialize(h.at("shuffle_rng").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (st.policy.actor.output_dim() != st.policy.M + 2) throw FormatError("checkpoint: actor shape mismatch");
  read_vec(in, st.policy.theta, st.policy.actor.num_params());
  read_vec(in, st.policy.lambda, st.policy.critic.num_params());
  read_vec(in, st.actor_opt.m, st.policy.actor.num_params());
  read_vec(in, st.actor_opt.v, st.policy.actor.num_params());
  read_vec(in, st.critic_opt.m, st.policy.critic.num_params());
  read_vec(in, st.critic_opt.v, st.policy.critic.num_params());
  return st;
}

}  // namespace covert::gppo
