#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "optx/grid.hpp"
#include "optx/mlp.hpp"
#include "optx/rng.hpp"

namespace optx {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct PpoConfig {
  double learning_rate = 3e-4;
  double clip_epsilon = 0.2;
  double entropy_coef = 0.0;
  double value_loss_coef = 0.5;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int rollout_length = 2048;
  int epochs_per_update = 10;
  int minibatch_size = 64;
  long long total_env_steps = 100000;
  double max_grad_norm = 0.5;  // 0 disables clipping
  bool normalize_advantages = true;  // per-minibatch mean 0 / std 1
  AdamConfig adam;

  void validate() const;
};

struct RolloutRecord {
  Vec obs;
  int action = 0;
  double logp = 0.0;
  double reward = 0.0;  // option decisions carry the gamma-aggregated reward
  double value = 0.0;
  int kappa = 1;
  bool terminal = false;
  bool truncated = false;
  double bootstrap_value = 0.0;  // value of the successor at truncation
};

struct RolloutBuffer {
  std::vector<RolloutRecord> records;
  Vec advantages;
  Vec returns;
  double tail_bootstrap = 0.0;  // value of the state after the last record
  std::vector<double> completed_episode_returns;
  long long env_steps = 0;  // primitive steps (sum of kappa)
};

// Persistent episode state so consecutive rollouts continue mid-episode.
struct EnvCursor {
  Vec obs;
  double episode_return = 0.0;
  bool active = false;
};

// Samples n_steps decisions from the stochastic policy, auto-resetting the
// environment on terminal/truncated boundaries.
RolloutBuffer collect_rollouts(const Mlp& policy, const Mlp& value, Env& env, int n_steps,
                               RngStream& rng, EnvCursor* cursor = nullptr);

// Generalized advantage estimation. SMDP decisions bootstrap with
// gamma^kappa; the lambda chain breaks at episode boundaries.
void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda);

struct GradientSet {
  std::vector<LayerParams> policy;
  std::vector<LayerParams> value;
};
GradientSet zero_gradients(const Mlp& policy, const Mlp& value);

struct LossParts {
  double total = 0.0;
  double surrogate = 0.0;
  double entropy = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
};

// Clipped-surrogate PPO loss on one minibatch:
//   -mean(min(r*A, clip(r)*A)) + c_v*mean((V-R)^2) - c_e*mean(H)
// with advantages normalized over the minibatch. Scalar-only evaluation and
// the analytic gradients share this path, so finite differences check the
// exact same function.
LossParts ppo_loss(const Mlp& policy, const Mlp& value, const RolloutBuffer& buffer,
                   std::span<const int> indices, const PpoConfig& cfg,
                   GradientSet* grads = nullptr);

struct AdamState {
  GradientSet m;
  GradientSet v;
  long long t = 0;
};
AdamState make_adam_state(const Mlp& policy, const Mlp& value);

struct UpdateMetrics {
  double surrogate = 0.0;
  double entropy = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio_first_epoch = 0.0;
  double total_loss = 0.0;
};

// One PPO update phase: epochs_per_update passes of shuffled minibatches
// with Adam steps. Throws NumericError (with diagnostics) on non-finite loss.
UpdateMetrics ppo_update(Mlp& policy, Mlp& value, AdamState& adam, const RolloutBuffer& buffer,
                         const PpoConfig& cfg, RngStream& rng);

struct TrainRecord {
  long long env_step = 0;
  double mean_episode_return = 0.0;
};

struct TrainResult {
  Mlp policy;
  Mlp value;
  std::vector<TrainRecord> curve;  // one record per update
};

// Full training loop on a prepared environment (base task or augmented
// wrapper). Deterministic for a fixed seed.
TrainResult train_on_env(Env& env, const std::vector<int>& policy_hidden,
                         const std::vector<int>& value_hidden, const PpoConfig& cfg,
                         std::uint64_t seed);

TrainResult train_task(const GridSpec& task, const std::vector<int>& policy_hidden,
                       const std::vector<int>& value_hidden, const PpoConfig& cfg,
                       std::uint64_t seed);

struct GreedyEpisode {
  double episode_return = 0.0;
  bool terminal = false;
  int primitive_steps = 0;
};

// One argmax episode; stops at terminal or the environment's own step cap.
GreedyEpisode greedy_episode(const Mlp& policy, Env& env);

}  // namespace optx
