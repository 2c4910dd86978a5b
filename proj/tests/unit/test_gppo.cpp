#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "covert/errors.hpp"
#include "covert/gppo.hpp"
#include "gradcheck.hpp"

using namespace covert;
using namespace covert::gppo;

namespace {

// One-state bandit: reward exp(-(x - 1)^2) on level 2, nothing elsewhere.
class Bandit : public TrainingEnv {
 public:
  int num_levels() const override { return 3; }
  Features reset() override { return {0.5, -0.5, 0.25, 1.0}; }
  std::vector<Outcome> evaluate_group(std::span<const Action> actions) override {
    std::vector<Outcome> out;
    for (const auto& a : actions) {
      Outcome o;
      o.reward = a.m == 2 ? std::exp(-(a.x_pow - 1.0) * (a.x_pow - 1.0)) : 0.0;
      o.next = reset();
      o.latency = 1.0 / std::max(o.reward, 1e-9);
      o.violated = a.m != 2;
      out.push_back(o);
    }
    return out;
  }
  bool commit(std::size_t) override { return ++steps_ % 50 == 0; }

  static double reward(const Action& a) { return a.m == 2 ? std::exp(-(a.x_pow - 1.0) * (a.x_pow - 1.0)) : 0.0; }

 private:
  long steps_ = 0;
};

HyperParams small_hyper() {
  HyperParams hp;
  hp.hidden = 32;
  hp.rollout = 64;
  hp.minibatch = 32;
  hp.epochs = 4;
  hp.lr = 3e-3;
  hp.lr_decay = 1.0;
  hp.total_steps = 64 * 20;
  return hp;
}

}  // namespace

TEST_CASE("variant names") {
  CHECK(variant_from_name("gppo") == Variant::GPPO);
  CHECK(variant_from_name("ppo") == Variant::PPO);
  CHECK(variant_from_name("grpo") == Variant::GRPO);
  CHECK(variant_name(Variant::GRPO) == "grpo");
  CHECK_THROWS_AS(variant_from_name("trpo"), ConfigError);
  const auto ppo = effective_hyper(HyperParams{}, Variant::PPO);
  CHECK(ppo.G == 1);
  CHECK(ppo.beta_kl == 0.0);
  CHECK(effective_hyper(HyperParams{}, Variant::GRPO).beta_kl == 0.0);
  CHECK(effective_hyper(HyperParams{}, Variant::GRPO).G == 5);
  CHECK(effective_hyper(HyperParams{}, Variant::GPPO).beta_kl == 0.1);
}

TEST_CASE("estimators") {
  CHECK(td_error(1.0, 2.0, 0.5, 0.9) == doctest::Approx(2.3));
  CHECK(td_error(1.0, 2.0, 0.5, 0.0) == 0.5);
  const std::vector<double> d{1.0, 2.0, 4.0};
  CHECK(gae(d, 0.9, 0.5) == doctest::Approx(1.0 + 0.45 * 2.0 + 0.45 * 0.45 * 4.0));
  CHECK(gae(d, 0.0, 0.97) == 1.0);
  CHECK_THROWS_AS(gae(std::vector<double>{}, 0.9, 0.9), DomainError);

  const std::vector<double> r{1.0, 2.0, 3.0, 4.0};
  const auto n = normalize_group(r);
  const double sd = std::sqrt(1.25);
  CHECK(n[0] == doctest::Approx(-1.5 / sd));
  CHECK(n[3] == doctest::Approx(1.5 / sd));
  CHECK(std::accumulate(n.begin(), n.end(), 0.0) == doctest::Approx(0.0));
  CHECK(normalize_group(std::vector<double>{0.3, 0.3, 0.3}) == std::vector<double>(3, 0.0));
  CHECK(normalize_group(std::vector<double>{7.0}) == std::vector<double>{0.0});

  CHECK(select_best(std::vector<double>{0.1, 0.5, 0.5, 0.2}) == 1);
  CHECK_THROWS_AS(select_best(std::vector<double>{}), DomainError);

  Rng rng(6);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> g(static_cast<std::size_t>(rng.uniform_int(2, 10)));
    for (auto& x : g) x = 5 * rng.normal();
    const auto z = normalize_group(g);
    double m = 0, s2 = 0;
    for (double x : z) m += x;
    m /= static_cast<double>(z.size());
    for (double x : z) s2 += (x - m) * (x - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(s2 / static_cast<double>(z.size()) == doctest::Approx(1.0));
  }
}

TEST_CASE("actor loss") {
  SUBCASE("at the old policy") {
    const auto v = actor_loss(-1.3, -1.3, 2.0, 0.2, 0.1);
    CHECK(v.loss == doctest::Approx(-2.0));
    CHECK(v.grad == doctest::Approx(-(2.0 - 0.1)));
  }
  SUBCASE("clipped from above, positive advantage") {
    const double d = std::log(1.5);
    const auto v = actor_loss(d, 0.0, 1.0, 0.2, 0.1);
    CHECK(v.loss == doctest::Approx(-(1.2 - 0.1 * d)));
    CHECK(v.grad == doctest::Approx(0.1));
  }
  SUBCASE("clipped from below, negative advantage") {
    const double d = std::log(0.5);
    const auto v = actor_loss(d, 0.0, -1.0, 0.2, 0.0);
    CHECK(v.loss == doctest::Approx(0.8));
    CHECK(v.grad == 0.0);
  }
  SUBCASE("pessimistic side is unclipped") {
    const double d = std::log(0.5);
    const auto v = actor_loss(d, 0.0, 1.0, 0.2, 0.0);
    CHECK(v.loss == doctest::Approx(-0.5));
    CHECK(v.grad == doctest::Approx(-0.5));
  }
  SUBCASE("derivative matches finite differences away from kinks") {
    Rng rng(1);
    for (int k = 0; k < 500; ++k) {
      const double old = rng.normal();
      const double lp = old + 0.6 * (rng.uniform() - 0.5);
      const double adv = rng.normal();
      const double rho = std::exp(lp - old);
      if (std::abs(rho - 0.8) < 1e-4 || std::abs(rho - 1.2) < 1e-4) continue;
      const double h = 1e-6;
      const double fd =
          (actor_loss(lp + h, old, adv, 0.2, 0.1).loss - actor_loss(lp - h, old, adv, 0.2, 0.1).loss) / (2 * h);
      CHECK(actor_loss(lp, old, adv, 0.2, 0.1).grad == doctest::Approx(fd).epsilon(1e-6));
    }
  }
  CHECK(critic_loss(3.0, 1.0).loss == 4.0);
  CHECK(critic_loss(3.0, 1.0).grad == 4.0);
}

TEST_CASE("batch gradients match central differences") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = testing::gradient_check(seed);
    CAPTURE(seed);
    CHECK(r.actor_rel < 1e-4);
    CHECK(r.critic_rel < 1e-4);
  }
}

TEST_CASE("log-std squash") {
  CHECK(squash_log_std(0.0, -2.0, 2.0) == 0.0);
  CHECK(squash_log_std(100.0, -2.5, 2.0) == doctest::Approx(2.0));
  CHECK(squash_log_std(-100.0, -2.5, 2.0) == doctest::Approx(-2.5));
  for (double x = -3; x < 3; x += 0.25) CHECK(unsquash_log_std(squash_log_std(x, -5, 2), -5, 2) == doctest::Approx(x));
  CHECK_THROWS_AS(unsquash_log_std(2.0, -5, 2), DomainError);
}

TEST_CASE("policy head") {
  HyperParams hp;
  hp.hidden = 16;
  Rng rng(2);
  auto p = PolicyParams::create(5, hp, -11.0, rng);
  const Features s{0.0, 0.0, 0.0, 0.0};
  const auto out = policy_output(p, s);
  CHECK(out.logits.size() == 5);
  const auto last = p.actor.num_layers() - 1;
  CHECK(p.theta[p.actor.bias_offset(last) + 5] == -11.0);
  CHECK(squash_log_std(p.theta[p.actor.bias_offset(last) + 6], hp.log_std_min, hp.log_std_max) ==
        doctest::Approx(0.0).epsilon(1e-12));
  double total = 0.0;
  for (int m = 0; m < 5; ++m) total += level_probability(p, s, m);
  CHECK(total == doctest::Approx(1.0));

  SUBCASE("log-probability against a direct formula") {
    for (int k = 0; k < 50; ++k) {
      const Action a{static_cast<int>(rng.uniform_int(0, 4)), out.mean + rng.normal()};
      const double sd = std::exp(out.log_std);
      const double ref = std::log(level_probability(p, s, a.m)) -
                         std::log(sd * std::sqrt(2 * M_PI)) -
                         (a.x_pow - out.mean) * (a.x_pow - out.mean) / (2 * sd * sd);
      CHECK(log_prob(out, a) == doctest::Approx(ref).epsilon(1e-12));
    }
    CHECK_THROWS_AS(log_prob(out, Action{5, 0.0}), DomainError);
  }

  SUBCASE("sampling statistics") {
    Rng srng(3);
    const auto g = sample_group(p, s, 20000, srng);
    std::vector<double> freq(5, 0.0);
    double mean = 0.0;
    for (const auto& a : g) {
      freq[static_cast<std::size_t>(a.action.m)] += 1.0 / 20000;
      mean += a.action.x_pow / 20000;
      CHECK(a.log_prob == log_prob(out, a.action));
    }
    for (int m = 0; m < 5; ++m) CHECK(std::abs(freq[static_cast<std::size_t>(m)] - level_probability(p, s, m)) < 0.015);
    CHECK(std::abs(mean - out.mean) < 0.03);
    CHECK_THROWS_AS(sample_group(p, s, 0, srng), DomainError);
  }

  SUBCASE("collapsed std gives samples at the mean") {
    HyperParams tight = hp;
    tight.log_std_min = -5.0;
    Rng r2(2);
    auto q = PolicyParams::create(5, tight, -11.0, r2);
    q.theta[q.actor.bias_offset(q.actor.num_layers() - 1) + 6] = -50.0;
    const auto o = policy_output(q, s);
    CHECK(o.log_std == doctest::Approx(-5.0));
    Rng srng(4);
    for (const auto& a : sample_group(q, s, 100, srng)) CHECK(std::abs(a.action.x_pow - o.mean) < 6 * std::exp(-5.0));
    CHECK(deterministic_action(q, s).x_pow == o.mean);
  }
}

TEST_CASE("training on a bandit") {
  Bandit env;
  auto hp = small_hyper();
  hp.total_steps = 64 * 150;
  const auto res = train(env, hp, Variant::GPPO, 3);
  REQUIRE(res.curve.size() == 150);
  const auto a = deterministic_action(res.state.policy, env.reset());
  CHECK(a.m == 2);
  CHECK(Bandit::reward(a) >= 0.95);
  CHECK(res.curve.back().reward_mean > res.curve.front().reward_mean);
}

TEST_CASE("zero learning rate leaves the policy fixed") {
  Bandit env;
  auto hp = small_hyper();
  hp.lr = 0.0;
  auto st = init_training(env, hp, Variant::GPPO, 5);
  const auto theta0 = st.policy.theta;
  const auto curve = resume(env, st, 10);
  CHECK(st.policy.theta == theta0);
  for (const auto& c : curve) CHECK(std::abs(c.reward_mean - curve[0].reward_mean) < 0.15);
}

TEST_CASE("training is deterministic") {
  auto hp = small_hyper();
  for (auto v : {Variant::GPPO, Variant::GRPO, Variant::PPO}) {
    Bandit e1, e2;
    const auto a = train(e1, hp, v, 17);
    const auto b = train(e2, hp, v, 17);
    CHECK(a.curve == b.curve);
    CHECK(a.state.policy.theta == b.state.policy.theta);
    Bandit e3;
    CHECK_FALSE(train(e3, hp, v, 18).curve == a.curve);
  }
}

TEST_CASE("PPO is GPPO with one sample and no KL term") {
  auto hp = small_hyper();
  Bandit e1, e2;
  const auto ppo = train(e1, hp, Variant::PPO, 9);
  auto single = hp;
  single.G = 1;
  single.beta_kl = 0.0;
  const auto gppo1 = train(e2, single, Variant::GPPO, 9);
  CHECK(ppo.curve == gppo1.curve);
  CHECK(ppo.state.policy.theta == gppo1.state.policy.theta);
  CHECK(ppo.state.policy.lambda == gppo1.state.policy.lambda);
}

TEST_CASE("resuming matches an uninterrupted run") {
  auto hp = small_hyper();
  Bandit e1, e2;
  const auto full = train(e1, hp, Variant::GPPO, 4);
  auto st = init_training(e2, hp, Variant::GPPO, 4);
  auto c1 = resume(e2, st, 8);
  const auto path = (std::filesystem::temp_directory_path() / "covert_ckpt_test.bin").string();
  save_checkpoint(path, st, "{\"seed\":4}");
  auto st2 = load_checkpoint(path);
  CHECK(st2.iteration == 8);
  CHECK(st2.policy.theta == st.policy.theta);
  const auto c2 = resume(e2, st2, 12);
  c1.insert(c1.end(), c2.begin(), c2.end());
  CHECK(c1 == full.curve);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint errors") {
  const auto path = (std::filesystem::temp_directory_path() / "covert_bad_ckpt.bin").string();
  { std::ofstream(path) << "NOTACKPT"; }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  CHECK_THROWS_AS(load_checkpoint(path + ".missing"), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("hyperparameter validation") {
  auto bad = [](auto f) {
    HyperParams h;
    f(h);
    return h;
  };
  CHECK_THROWS_AS(bad([](HyperParams& h) { h.G = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](HyperParams& h) { h.eps_clip = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](HyperParams& h) { h.beta_kl = -1; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](HyperParams& h) { h.target_kl = -1; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](HyperParams& h) { h.log_std_min = 3; }).validate(), ConfigError);
  CHECK(HyperParams{}.iterations() == 245);
}

TEST_CASE("curve csv") {
  std::vector<CurvePoint> c{{0, 0.5, 2.0, 0.9, 0.97, 0.1, 3e-4}};
  std::ostringstream out;
  write_curve_csv(out, c);
  const auto s = out.str();
  CHECK(s.find("iteration,") == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 2);
}
