#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fake_env.hpp"
#include "fixtures.hpp"
#include "optx/option_env.hpp"
#include "optx/trainer.hpp"

using namespace optx;

namespace {

PpoConfig small_config() {
  PpoConfig cfg;
  cfg.rollout_length = 64;
  cfg.minibatch_size = 32;
  cfg.epochs_per_update = 2;
  cfg.learning_rate = 1e-3;
  return cfg;
}

// Synthetic buffer for gradient checks: random observations/targets, stored
// log-probs perturbed so ratios differ from one and the clip kicks in.
// Redraws aim configurations away from ReLU kinks and clip boundaries so the
// finite-difference probe stays on one smooth branch.
RolloutBuffer synthetic_buffer(const Mlp& policy, const Mlp& value, int n, RngStream& rng,
                               double clip_eps) {
  RolloutBuffer buffer;
  const int n_in = policy.input_size();
  for (int i = 0; i < n; ++i) {
    while (true) {
      RolloutRecord rec;
      rec.obs = testfix::random_input(n_in, rng);
      ForwardTrace trace;
      Vec probs = policy.forward(rec.obs, &trace);
      bool near_kink = false;
      for (double z : trace.z.front()) near_kink = near_kink || std::abs(z) < 1e-3;
      ForwardTrace vtrace;
      value.head_input(rec.obs, &vtrace);
      for (double z : vtrace.z.front()) near_kink = near_kink || std::abs(z) < 1e-3;
      if (near_kink) continue;
      rec.action = rng.next_int(policy.output_size());
      const double offset = 0.6 * (rng.next_double() - 0.5);
      rec.logp = std::log(probs[rec.action]) + offset;
      const double ratio = std::exp(-offset);
      if (std::abs(ratio - (1.0 - clip_eps)) < 1e-2 ||
          std::abs(ratio - (1.0 + clip_eps)) < 1e-2) {
        continue;
      }
      buffer.records.push_back(std::move(rec));
      break;
    }
  }
  buffer.advantages.resize(n);
  buffer.returns.resize(n);
  for (int i = 0; i < n; ++i) {
    buffer.advantages[i] = rng.next_gaussian();
    buffer.returns[i] = rng.next_gaussian();
  }
  return buffer;
}

double flat_params(Mlp& net, int index, double delta) {
  int k = 0;
  for (LayerParams& layer : net.layers()) {
    for (double& w : layer.w) {
      if (k++ == index) {
        w += delta;
        return w;
      }
    }
    for (double& b : layer.b) {
      if (k++ == index) {
        b += delta;
        return b;
      }
    }
  }
  return 0.0;
}

int param_count(const Mlp& net) {
  int k = 0;
  for (const LayerParams& layer : net.layers()) {
    k += static_cast<int>(layer.w.size() + layer.b.size());
  }
  return k;
}

double flat_grad(const std::vector<LayerParams>& grads, int index) {
  int k = 0;
  for (const LayerParams& layer : grads) {
    for (double w : layer.w) {
      if (k++ == index) return w;
    }
    for (double b : layer.b) {
      if (k++ == index) return b;
    }
  }
  return 0.0;
}

}  // namespace

TEST_CASE("config validation") {
  PpoConfig cfg;
  cfg.clip_epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PpoConfig{};
  cfg.gamma = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = PpoConfig{};
  cfg.minibatch_size = cfg.rollout_length + 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(PpoConfig{}.validate());
}

TEST_CASE("collect_rollouts gathers exactly n records") {
  testfix::ChainEnv env(6, 3, 1, 50);
  Mlp policy = init_mlp({6, 4, 3}, Head::kSoftmax, 1);
  Mlp value = init_mlp({6, 4, 1}, Head::kLinear, 2);
  RngStream rng(3);
  RolloutBuffer buf = collect_rollouts(policy, value, env, 128, rng);
  CHECK(buf.records.size() == 128);
  CHECK(buf.env_steps == 128);
}

TEST_CASE("degenerate one-action environment stores zero log-probs") {
  testfix::ChainEnv env(5, 1, 0, 50);
  Mlp policy = init_mlp({5, 3, 1}, Head::kSoftmax, 1);
  Mlp value = init_mlp({5, 3, 1}, Head::kLinear, 2);
  RngStream rng(3);
  RolloutBuffer buf = collect_rollouts(policy, value, env, 32, rng);
  for (const auto& rec : buf.records) {
    CHECK(rec.action == 0);
    CHECK(rec.logp == 0.0);
  }
}

TEST_CASE("uniform policy action frequencies within 3 sigma") {
  testfix::ChainEnv env(4, 3, 1, 1000000);
  Mlp policy({4, 4, 3}, Head::kSoftmax);  // zero weights: exactly uniform
  Mlp value = init_mlp({4, 4, 1}, Head::kLinear, 2);
  RngStream rng(17);
  RolloutBuffer buf = collect_rollouts(policy, value, env, 10000, rng);
  std::vector<int> counts(3, 0);
  for (const auto& rec : buf.records) ++counts[rec.action];
  const double sigma = std::sqrt(10000 * (1.0 / 3.0) * (2.0 / 3.0));
  for (int c : counts) CHECK(std::abs(c - 10000.0 / 3.0) <= 3 * sigma);
}

TEST_CASE("advantage fixtures") {
  SUBCASE("single terminal transition") {
    RolloutBuffer buf;
    RolloutRecord rec;
    rec.reward = 2.5;
    rec.value = 0.0;
    rec.terminal = true;
    buf.records.push_back(rec);
    compute_advantages(buf, 0.99, 0.95);
    CHECK(buf.advantages[0] == doctest::Approx(2.5).epsilon(1e-12));
  }
  SUBCASE("undiscounted reward-to-go") {
    RolloutBuffer buf;
    RolloutRecord a;
    a.reward = 0.0;
    RolloutRecord b;
    b.reward = 1.0;
    b.terminal = true;
    buf.records = {a, b};
    compute_advantages(buf, 1.0, 1.0);
    CHECK(buf.advantages[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(buf.advantages[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("GAE equals the direct discounted sum of TD residuals") {
  RngStream rng(5);
  const double gamma = 0.97;
  const double lambda = 0.9;
  RolloutBuffer buf;
  for (int i = 0; i < 10; ++i) {
    RolloutRecord rec;
    rec.reward = rng.next_gaussian();
    rec.value = rng.next_gaussian();
    rec.terminal = i == 9;
    buf.records.push_back(rec);
  }
  compute_advantages(buf, gamma, lambda);
  for (int t = 0; t < 10; ++t) {
    double expected = 0.0;
    for (int k = t; k < 10; ++k) {
      const double v_next = k == 9 ? 0.0 : buf.records[k + 1].value;
      const double delta = buf.records[k].reward + gamma * v_next - buf.records[k].value;
      expected += std::pow(gamma * lambda, k - t) * delta;
    }
    CHECK(buf.advantages[t] == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("SMDP transitions bootstrap with gamma^kappa") {
  // Option decisions over the chain: every decision advances 3 primitive
  // steps; with zero values and lambda=1 the returns must match the
  // flattened primitive-level discounted sums.
  const double gamma = 0.9;
  auto base = std::make_unique<testfix::ChainEnv>(10, 2, 1, 100);
  OptionDef opt;
  opt.kind = OptionKind::kScripted;
  opt.actions = {1, 1, 1};
  opt.z = 3;
  AugmentedEnv env(std::move(base), {opt}, gamma);
  Mlp policy({10, 3, 3}, Head::kSoftmax);
  Mlp value({10, 3, 1}, Head::kLinear);  // zero net: values are all 0
  RngStream rng(1);

  EnvCursor cursor;
  RolloutBuffer buf;
  buf.records.clear();
  Vec obs = env.reset(rng);
  std::vector<double> primitive_rewards;
  while (!env.done()) {
    RolloutRecord rec;
    rec.obs = obs;
    rec.action = 2;  // always take the option
    StepResult r = env.step(2);
    rec.reward = r.reward;
    rec.kappa = r.kappa;
    rec.terminal = r.terminal;
    rec.truncated = r.truncated;
    rec.value = 0.0;
    buf.records.push_back(rec);
    for (int k = 0; k < r.kappa; ++k) primitive_rewards.push_back(-1.0);
    obs = r.obs;
  }
  primitive_rewards.back() = 0.0;  // terminal step pays 0
  compute_advantages(buf, gamma, 1.0);

  // Flattened primitive-level discounted return from each decision point.
  std::size_t prim_index = 0;
  for (std::size_t t = 0; t < buf.records.size(); ++t) {
    double expected = 0.0;
    double disc = 1.0;
    for (std::size_t k = prim_index; k < primitive_rewards.size(); ++k) {
      expected += disc * primitive_rewards[k];
      disc *= gamma;
    }
    CHECK(buf.returns[t] == doctest::Approx(expected).epsilon(1e-10));
    prim_index += buf.records[t].kappa;
  }
}

TEST_CASE("probability ratios equal one on the first pass") {
  testfix::ChainEnv env(6, 3, 1, 50);
  Mlp policy = init_mlp({6, 5, 3}, Head::kSoftmax, 9);
  Mlp value = init_mlp({6, 5, 1}, Head::kLinear, 10);
  RngStream rng(11);
  RolloutBuffer buf = collect_rollouts(policy, value, env, 64, rng);
  compute_advantages(buf, 0.99, 0.95);
  std::vector<int> idx(64);
  std::iota(idx.begin(), idx.end(), 0);
  LossParts parts = ppo_loss(policy, value, buf, idx, small_config());
  CHECK(std::abs(parts.mean_ratio - 1.0) <= 1e-9);
  CHECK(parts.clip_fraction == 0.0);
}

TEST_CASE("at ratio one the surrogate gradient is the vanilla policy gradient") {
  RngStream rng(21);
  Mlp policy = init_mlp({4, 5, 3}, Head::kSoftmax, 3, InitScheme::kOrthogonal,
                        InitGains{std::sqrt(2.0), 0.7});
  Mlp value({4, 3, 1}, Head::kLinear);
  RolloutBuffer buf;
  for (int i = 0; i < 16; ++i) {
    RolloutRecord rec;
    rec.obs = testfix::random_input(4, rng);
    rec.action = rng.next_int(3);
    rec.logp = std::log(policy.forward(rec.obs)[rec.action]);  // on-policy: ratio 1
    buf.records.push_back(std::move(rec));
  }
  buf.advantages.resize(16);
  buf.returns.assign(16, 0.0);
  for (double& a : buf.advantages) a = rng.next_gaussian();

  PpoConfig cfg = small_config();
  cfg.clip_epsilon = 0.999;  // clipping inert at ratio 1
  cfg.entropy_coef = 0.0;
  cfg.value_loss_coef = 0.0;
  std::vector<int> idx(16);
  std::iota(idx.begin(), idx.end(), 0);
  GradientSet grads = zero_gradients(policy, value);
  ppo_loss(policy, value, buf, idx, cfg, &grads);

  // Vanilla estimator: d/dtheta of -mean(normalized_adv * log pi(a|s)),
  // checked by central finite differences.
  double mean = 0.0;
  for (double a : buf.advantages) mean += a;
  mean /= 16;
  double var = 0.0;
  for (double a : buf.advantages) var += (a - mean) * (a - mean);
  const double inv_std = 1.0 / (std::sqrt(var / 16) + 1e-8);
  auto reinforce_loss = [&](const Mlp& p) {
    double total = 0.0;
    for (int i = 0; i < 16; ++i) {
      const double adv = (buf.advantages[i] - mean) * inv_std;
      total += -adv * std::log(p.forward(buf.records[i].obs)[buf.records[i].action]);
    }
    return total / 16;
  };
  const double h = 1e-6;
  for (int k = 0; k < param_count(policy); k += 7) {
    Mlp plus = policy;
    Mlp minus = policy;
    flat_params(plus, k, h);
    flat_params(minus, k, -h);
    const double fd = (reinforce_loss(plus) - reinforce_loss(minus)) / (2 * h);
    const double an = flat_grad(grads.policy, k);
    CHECK(std::abs(fd - an) <= 1e-6 + 1e-4 * std::abs(fd));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  RngStream rng(777);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n_in = 2 + rng.next_int(3);
    const int hidden = 2 + rng.next_int(4);
    const int n_act = 2 + rng.next_int(2);
    Mlp policy = testfix::random_policy(n_in, hidden, n_act, rng, 0.8);
    Mlp value({n_in, hidden, 1}, Head::kLinear);
    for (auto& layer : value.layers()) {
      for (double& w : layer.w) w = 0.8 * rng.next_gaussian();
      for (double& b : layer.b) b = 0.8 * rng.next_gaussian();
    }

    PpoConfig cfg = small_config();
    cfg.entropy_coef = 0.03;
    cfg.value_loss_coef = 0.5;
    RolloutBuffer buf = synthetic_buffer(policy, value, 12, rng, cfg.clip_epsilon);
    std::vector<int> idx(12);
    std::iota(idx.begin(), idx.end(), 0);

    GradientSet grads = zero_gradients(policy, value);
    ppo_loss(policy, value, buf, idx, cfg, &grads);

    const double h = 1e-5;
    auto check_net = [&](bool is_policy) {
      Mlp& net = is_policy ? policy : value;
      const auto& g = is_policy ? grads.policy : grads.value;
      for (int k = 0; k < param_count(net); ++k) {
        Mlp save = net;
        flat_params(net, k, h);
        const double up = ppo_loss(policy, value, buf, idx, cfg).total;
        net = save;
        flat_params(net, k, -h);
        const double down = ppo_loss(policy, value, buf, idx, cfg).total;
        net = save;
        const double fd = (up - down) / (2 * h);
        const double an = flat_grad(g, k);
        const double rel = std::abs(fd - an) / std::max({1.0e-6, std::abs(fd), std::abs(an)});
        CHECK(rel <= 1e-4);
        ++checked;
      }
    };
    check_net(true);
    check_net(false);
  }
  CHECK(checked > 500);
}

TEST_CASE("entropy bonus raises policy entropy when advantages vanish") {
  RngStream rng(31);
  Mlp policy = testfix::random_policy(4, 4, 3, rng, 0.5);
  Mlp value({4, 4, 1}, Head::kLinear);
  RolloutBuffer buf;
  for (int i = 0; i < 32; ++i) {
    RolloutRecord rec;
    rec.obs = testfix::random_input(4, rng);
    rec.action = rng.next_int(3);
    rec.logp = std::log(policy.forward(rec.obs)[rec.action]);
    buf.records.push_back(std::move(rec));
  }
  buf.advantages.assign(32, 0.0);
  buf.returns.assign(32, 0.0);

  PpoConfig cfg = small_config();
  cfg.rollout_length = 32;
  cfg.minibatch_size = 32;
  cfg.epochs_per_update = 1;
  cfg.entropy_coef = 0.1;
  cfg.value_loss_coef = 0.0;
  cfg.learning_rate = 1e-3;

  auto entropy_of = [&](const Mlp& p) {
    double total = 0.0;
    for (const auto& rec : buf.records) {
      for (double q : p.forward(rec.obs)) {
        if (q > 0) total -= q * std::log(q);
      }
    }
    return total / buf.records.size();
  };
  const double before = entropy_of(policy);
  AdamState adam = make_adam_state(policy, value);
  RngStream urng(1);
  ppo_update(policy, value, adam, buf, cfg, urng);
  CHECK(entropy_of(policy) > before);
}

TEST_CASE("uniformly positive advantage on one action raises its log-probability") {
  RngStream rng(41);
  Mlp policy = testfix::random_policy(4, 4, 3, rng, 0.3);
  Mlp value({4, 4, 1}, Head::kLinear);
  RolloutBuffer buf;
  for (int i = 0; i < 32; ++i) {
    RolloutRecord rec;
    rec.obs = testfix::random_input(4, rng);
    rec.action = 1;
    rec.logp = std::log(policy.forward(rec.obs)[1]);
    buf.records.push_back(std::move(rec));
  }
  buf.advantages.assign(32, 1.0);
  // Normalization would flatten a constant column; vary magnitudes instead.
  for (int i = 0; i < 32; ++i) buf.advantages[i] = 0.5 + 0.1 * (i % 5);
  buf.returns.assign(32, 0.0);

  PpoConfig cfg = small_config();
  cfg.rollout_length = 32;
  cfg.minibatch_size = 32;
  cfg.epochs_per_update = 1;
  cfg.entropy_coef = 0.0;
  cfg.value_loss_coef = 0.0;
  cfg.learning_rate = 5e-4;
  cfg.normalize_advantages = false;  // keep every sample's advantage positive

  auto mean_logp = [&](const Mlp& p) {
    double total = 0.0;
    for (const auto& rec : buf.records) total += std::log(p.forward(rec.obs)[1]);
    return total / buf.records.size();
  };
  const double before = mean_logp(policy);
  AdamState adam = make_adam_state(policy, value);
  RngStream urng(1);
  ppo_update(policy, value, adam, buf, cfg, urng);
  CHECK(mean_logp(policy) > before);
}

TEST_CASE("training is deterministic and zero budget returns the initial nets") {
  testfix::ChainEnv env1(6, 3, 1, 60);
  testfix::ChainEnv env2(6, 3, 1, 60);
  PpoConfig cfg = small_config();
  cfg.total_env_steps = 2000;
  TrainResult a = train_on_env(env1, {4}, {8}, cfg, 77);
  TrainResult b = train_on_env(env2, {4}, {8}, cfg, 77);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].env_step == b.curve[i].env_step);
    CHECK(a.curve[i].mean_episode_return == b.curve[i].mean_episode_return);
  }
  for (std::size_t l = 0; l < a.policy.layers().size(); ++l) {
    CHECK(a.policy.layers()[l].w == b.policy.layers()[l].w);
  }

  testfix::ChainEnv env3(6, 3, 1, 60);
  PpoConfig zero = small_config();
  zero.total_env_steps = 0;
  TrainResult c = train_on_env(env3, {4}, {8}, zero, 77);
  CHECK(c.curve.empty());
  Mlp expected = init_mlp({6, 4, 3}, Head::kSoftmax, mix_seed(77, 1), InitScheme::kOrthogonal,
                          InitGains{std::sqrt(2.0), 0.01});
  for (std::size_t l = 0; l < c.policy.layers().size(); ++l) {
    CHECK(c.policy.layers()[l].w == expected.layers()[l].w);
  }
}

TEST_CASE("PPO solves a short chain") {
  testfix::ChainEnv env(5, 2, 1, 40);
  PpoConfig cfg;
  cfg.rollout_length = 256;
  cfg.minibatch_size = 64;
  cfg.epochs_per_update = 4;
  cfg.learning_rate = 3e-3;
  cfg.entropy_coef = 0.01;
  cfg.total_env_steps = 12000;
  TrainResult result = train_on_env(env, {8}, {16}, cfg, 5);
  testfix::ChainEnv eval(5, 2, 1, 40);
  GreedyEpisode ep = greedy_episode(result.policy, eval);
  CHECK(ep.terminal);
  CHECK(ep.primitive_steps == 4);
  CHECK(ep.episode_return == -3.0);
}

TEST_CASE("sigmoid policies are rejected by the trainer") {
  Mlp policy({4, 3, 1}, Head::kSigmoid);
  Mlp value({4, 3, 1}, Head::kLinear);
  RolloutBuffer buf;
  RolloutRecord rec;
  rec.obs = Vec{0, 0, 0, 0};
  buf.records.push_back(rec);
  buf.advantages.assign(1, 0.0);
  buf.returns.assign(1, 0.0);
  std::vector<int> idx = {0};
  CHECK_THROWS_AS(ppo_loss(policy, value, buf, idx, small_config()), ConfigError);
}

TEST_CASE("non-finite loss raises a numeric error with diagnostics") {
  Mlp policy = init_mlp({4, 3, 2}, Head::kSoftmax, 1);
  Mlp value({4, 3, 1}, Head::kLinear);
  RolloutBuffer buf;
  for (int i = 0; i < 4; ++i) {
    RolloutRecord rec;
    rec.obs = Vec{1, 0, 0, 0};
    rec.action = 0;
    rec.logp = 0.0;
    buf.records.push_back(rec);
  }
  buf.advantages.assign(4, std::numeric_limits<double>::quiet_NaN());
  buf.returns.assign(4, 0.0);
  PpoConfig cfg = small_config();
  cfg.rollout_length = 4;
  cfg.minibatch_size = 4;
  AdamState adam = make_adam_state(policy, value);
  RngStream rng(1);
  CHECK_THROWS_AS(ppo_update(policy, value, adam, buf, cfg, rng), NumericError);
}
