#include "optx/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace optx {

void PpoConfig::validate() const {
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw ConfigError("clip_epsilon must be in (0,1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0,1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("gae_lambda must be in [0,1]");
  if (rollout_length < 1) throw ConfigError("rollout_length must be positive");
  if (epochs_per_update < 1) throw ConfigError("epochs_per_update must be positive");
  if (minibatch_size < 1) throw ConfigError("minibatch_size must be positive");
  if (minibatch_size > rollout_length) throw ConfigError("minibatch_size exceeds rollout_length");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (value_loss_coef < 0.0 || entropy_coef < 0.0) throw ConfigError("negative loss coefficient");
  if (total_env_steps < 0) throw ConfigError("total_env_steps must be >= 0");
}

RolloutBuffer collect_rollouts(const Mlp& policy, const Mlp& value, Env& env, int n_steps,
                               RngStream& rng, EnvCursor* cursor) {
  if (n_steps < 1) throw ConfigError("collect_rollouts: n_steps must be >= 1");
  EnvCursor local;
  EnvCursor& cur = cursor ? *cursor : local;
  if (!cur.active) {
    cur.obs = env.reset(rng);
    cur.episode_return = 0.0;
    cur.active = true;
  }
  RolloutBuffer buffer;
  buffer.records.reserve(n_steps);
  for (int i = 0; i < n_steps; ++i) {
    PolicyEval eval = policy_forward(policy, cur.obs);
    RolloutRecord rec;
    rec.obs = cur.obs;
    rec.value = value.scalar(cur.obs);
    rec.action = rng.sample_categorical(eval.probs);
    rec.logp = std::log(eval.probs[rec.action]);
    StepResult r = env.step(rec.action);
    rec.reward = r.reward;
    rec.kappa = r.kappa;
    rec.terminal = r.terminal;
    rec.truncated = r.truncated;
    buffer.env_steps += r.kappa;
    cur.episode_return += r.reward;
    if (r.terminal || r.truncated) {
      rec.bootstrap_value = r.terminal ? 0.0 : value.scalar(r.obs);
      buffer.completed_episode_returns.push_back(cur.episode_return);
      cur.obs = env.reset(rng);
      cur.episode_return = 0.0;
    } else {
      cur.obs = std::move(r.obs);
    }
    buffer.records.push_back(std::move(rec));
  }
  buffer.tail_bootstrap = value.scalar(cur.obs);
  return buffer;
}

void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda) {
  const std::size_t n = buffer.records.size();
  buffer.advantages.assign(n, 0.0);
  buffer.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const RolloutRecord& rec = buffer.records[k];
    const double gk = std::pow(gamma, rec.kappa);
    double adv;
    if (rec.terminal) {
      adv = rec.reward - rec.value;
    } else {
      double v_next;
      bool boundary;
      if (rec.truncated) {
        v_next = rec.bootstrap_value;
        boundary = true;
      } else if (k + 1 == n) {
        v_next = buffer.tail_bootstrap;
        boundary = true;
      } else {
        v_next = buffer.records[k + 1].value;
        boundary = false;
      }
      const double delta = rec.reward + gk * v_next - rec.value;
      adv = boundary ? delta : delta + gk * lambda * next_adv;
    }
    next_adv = adv;
    buffer.advantages[k] = adv;
    buffer.returns[k] = adv + rec.value;
  }
}

GradientSet zero_gradients(const Mlp& policy, const Mlp& value) {
  GradientSet g;
  for (const LayerParams& p : policy.layers()) g.policy.push_back(LayerParams::zeros(p.in, p.out));
  for (const LayerParams& p : value.layers()) g.value.push_back(LayerParams::zeros(p.in, p.out));
  return g;
}

namespace {

// Accumulates parameter gradients given dL/d(pre-head output).
void backprop(const Mlp& net, const ForwardTrace& trace, Vec dout,
              std::vector<LayerParams>& grads) {
  const auto& layers = net.layers();
  for (std::size_t l = layers.size(); l-- > 0;) {
    const LayerParams& p = layers[l];
    // dout holds dL/dz for the last layer; for hidden layers it arrives as
    // dL/da and the ReLU gate is applied here.
    if (l + 1 < layers.size()) {
      for (int r = 0; r < p.out; ++r) {
        if (trace.z[l][r] <= 0.0) dout[r] = 0.0;
      }
    }
    const Vec& a_prev = trace.a[l];
    LayerParams& g = grads[l];
    for (int r = 0; r < p.out; ++r) {
      const double gr = dout[r];
      if (gr == 0.0) continue;
      g.b[r] += gr;
      double* gw = &g.w[static_cast<std::size_t>(r) * p.in];
      for (int c = 0; c < p.in; ++c) gw[c] += gr * a_prev[c];
    }
    if (l == 0) break;
    Vec din(p.in, 0.0);
    for (int r = 0; r < p.out; ++r) {
      const double gr = dout[r];
      if (gr == 0.0) continue;
      const double* wr = &p.w[static_cast<std::size_t>(r) * p.in];
      for (int c = 0; c < p.in; ++c) din[c] += gr * wr[c];
    }
    dout = std::move(din);
  }
}

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

LossParts ppo_loss(const Mlp& policy, const Mlp& value, const RolloutBuffer& buffer,
                   std::span<const int> indices, const PpoConfig& cfg, GradientSet* grads) {
  if (policy.head() != Head::kSoftmax) {
    throw ConfigError("PPO training supports softmax policy heads only");
  }
  if (indices.empty()) throw ConfigError("ppo_loss: empty minibatch");
  const double n = static_cast<double>(indices.size());

  // Advantage normalization over the minibatch (mean 0, std 1).
  double mean = 0.0;
  double inv_std = 1.0;
  if (cfg.normalize_advantages) {
    for (int i : indices) mean += buffer.advantages[i];
    mean /= n;
    double var = 0.0;
    for (int i : indices) {
      const double d = buffer.advantages[i] - mean;
      var += d * d;
    }
    inv_std = 1.0 / (std::sqrt(var / n) + 1e-8);
  }

  LossParts parts;
  ForwardTrace ptrace;
  ForwardTrace vtrace;
  for (int i : indices) {
    const RolloutRecord& rec = buffer.records[i];
    const double adv = (buffer.advantages[i] - mean) * inv_std;

    Vec logits = policy.head_input(rec.obs, &ptrace);
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    const double log_z = mx + std::log(sum);
    Vec probs(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) probs[k] = std::exp(logits[k] - log_z);

    const double logp = logits[rec.action] - log_z;
    const double ratio = std::exp(logp - rec.logp);
    const double clipped = clip(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
    const double b1 = ratio * adv;
    const double b2 = clipped * adv;
    const double surr = std::min(b1, b2);

    double entropy = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      if (probs[k] > 0.0) entropy -= probs[k] * std::log(probs[k]);
    }

    const double v_pred = value.head_input(rec.obs, &vtrace)[0];
    const double v_err = v_pred - buffer.returns[i];

    parts.surrogate += surr / n;
    parts.entropy += entropy / n;
    parts.value_loss += v_err * v_err / n;
    parts.clip_fraction += (std::abs(ratio - 1.0) > cfg.clip_epsilon ? 1.0 : 0.0) / n;
    parts.mean_ratio += ratio / n;

    if (grads) {
      // d(min)/dlogp: the unclipped branch contributes ratio*adv when it is
      // the active minimum, the saturated clip branch contributes zero.
      const double dsurr_dlogp = b1 <= b2 ? b1 : 0.0;
      Vec dlogits(logits.size());
      for (std::size_t k = 0; k < logits.size(); ++k) {
        const double dlogp_k = (static_cast<int>(k) == rec.action ? 1.0 : 0.0) - probs[k];
        const double dH_k = -probs[k] * (std::log(std::max(probs[k], 1e-300)) + entropy);
        dlogits[k] = (-dsurr_dlogp * dlogp_k - cfg.entropy_coef * dH_k) / n;
      }
      backprop(policy, ptrace, std::move(dlogits), grads->policy);
      Vec dv(1, cfg.value_loss_coef * 2.0 * v_err / n);
      backprop(value, vtrace, std::move(dv), grads->value);
    }
  }
  parts.total = -parts.surrogate + cfg.value_loss_coef * parts.value_loss -
                cfg.entropy_coef * parts.entropy;
  return parts;
}

AdamState make_adam_state(const Mlp& policy, const Mlp& value) {
  AdamState s;
  s.m = zero_gradients(policy, value);
  s.v = zero_gradients(policy, value);
  return s;
}

namespace {

double gradient_sq_norm(const std::vector<LayerParams>& grads) {
  double s = 0.0;
  for (const LayerParams& g : grads) {
    for (double v : g.w) s += v * v;
    for (double v : g.b) s += v * v;
  }
  return s;
}

void scale_gradients(std::vector<LayerParams>& grads, double k) {
  for (LayerParams& g : grads) {
    for (double& v : g.w) v *= k;
    for (double& v : g.b) v *= k;
  }
}

void adam_step_params(std::vector<LayerParams>& params, std::vector<LayerParams>& m,
                      std::vector<LayerParams>& v, const std::vector<LayerParams>& grads,
                      double lr, const AdamConfig& cfg, long long t) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t l = 0; l < params.size(); ++l) {
    auto update = [&](Vec& p, Vec& mm, Vec& vv, const Vec& g) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        mm[i] = cfg.beta1 * mm[i] + (1.0 - cfg.beta1) * g[i];
        vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        p[i] -= lr * (mm[i] / bc1) / (std::sqrt(vv[i] / bc2) + cfg.eps);
      }
    };
    update(params[l].w, m[l].w, v[l].w, grads[l].w);
    update(params[l].b, m[l].b, v[l].b, grads[l].b);
  }
}

}  // namespace

UpdateMetrics ppo_update(Mlp& policy, Mlp& value, AdamState& adam, const RolloutBuffer& buffer,
                         const PpoConfig& cfg, RngStream& rng) {
  cfg.validate();
  const int n = static_cast<int>(buffer.records.size());
  if (cfg.minibatch_size > n) throw ConfigError("ppo_update: minibatch larger than buffer");
  if (buffer.advantages.size() != buffer.records.size()) {
    throw ConfigError("ppo_update: advantages not computed");
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  UpdateMetrics metrics;
  int batches = 0;
  int first_epoch_batches = 0;
  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    rng.shuffle(order);
    for (int start = 0; start + cfg.minibatch_size <= n; start += cfg.minibatch_size) {
      std::span<const int> idx(order.data() + start, static_cast<std::size_t>(cfg.minibatch_size));
      GradientSet grads = zero_gradients(policy, value);
      LossParts parts = ppo_loss(policy, value, buffer, idx, cfg, &grads);
      if (!std::isfinite(parts.total)) {
        std::ostringstream os;
        os << "non-finite PPO loss (epoch " << epoch << ", surrogate " << parts.surrogate
           << ", value " << parts.value_loss << ", entropy " << parts.entropy << ")";
        throw NumericError(os.str());
      }
      if (cfg.max_grad_norm > 0.0) {
        const double norm =
            std::sqrt(gradient_sq_norm(grads.policy) + gradient_sq_norm(grads.value));
        if (norm > cfg.max_grad_norm) {
          const double k = cfg.max_grad_norm / norm;
          scale_gradients(grads.policy, k);
          scale_gradients(grads.value, k);
        }
      }
      ++adam.t;
      adam_step_params(policy.layers(), adam.m.policy, adam.v.policy, grads.policy,
                       cfg.learning_rate, cfg.adam, adam.t);
      adam_step_params(value.layers(), adam.m.value, adam.v.value, grads.value,
                       cfg.learning_rate, cfg.adam, adam.t);
      metrics.surrogate += parts.surrogate;
      metrics.entropy += parts.entropy;
      metrics.value_loss += parts.value_loss;
      metrics.clip_fraction += parts.clip_fraction;
      metrics.total_loss += parts.total;
      if (epoch == 0) {
        metrics.mean_ratio_first_epoch += parts.mean_ratio;
        ++first_epoch_batches;
      }
      ++batches;
    }
  }
  if (batches > 0) {
    metrics.surrogate /= batches;
    metrics.entropy /= batches;
    metrics.value_loss /= batches;
    metrics.clip_fraction /= batches;
    metrics.total_loss /= batches;
  }
  if (first_epoch_batches > 0) metrics.mean_ratio_first_epoch /= first_epoch_batches;
  return metrics;
}

TrainResult train_on_env(Env& env, const std::vector<int>& policy_hidden,
                         const std::vector<int>& value_hidden, const PpoConfig& cfg,
                         std::uint64_t seed) {
  cfg.validate();
  std::vector<int> psizes;
  psizes.push_back(env.observation_size());
  psizes.insert(psizes.end(), policy_hidden.begin(), policy_hidden.end());
  psizes.push_back(env.action_count());
  std::vector<int> vsizes;
  vsizes.push_back(env.observation_size());
  vsizes.insert(vsizes.end(), value_hidden.begin(), value_hidden.end());
  vsizes.push_back(1);

  TrainResult result;
  result.policy = init_mlp(psizes, Head::kSoftmax, mix_seed(seed, 1), InitScheme::kOrthogonal,
                           InitGains{std::sqrt(2.0), 0.01});
  result.value = init_mlp(vsizes, Head::kLinear, mix_seed(seed, 2), InitScheme::kOrthogonal,
                          InitGains{std::sqrt(2.0), 1.0});

  AdamState adam = make_adam_state(result.policy, result.value);
  RngStream rng_env(seed, 3);
  RngStream rng_update(seed, 4);
  EnvCursor cursor;
  long long steps = 0;
  double last_mean_return = 0.0;
  while (steps < cfg.total_env_steps) {
    RolloutBuffer buffer =
        collect_rollouts(result.policy, result.value, env, cfg.rollout_length, rng_env, &cursor);
    compute_advantages(buffer, cfg.gamma, cfg.gae_lambda);
    ppo_update(result.policy, result.value, adam, buffer, cfg, rng_update);
    steps += buffer.env_steps;
    if (!buffer.completed_episode_returns.empty()) {
      double s = std::accumulate(buffer.completed_episode_returns.begin(),
                                 buffer.completed_episode_returns.end(), 0.0);
      last_mean_return = s / buffer.completed_episode_returns.size();
    }
    result.curve.push_back(TrainRecord{steps, last_mean_return});
  }
  return result;
}

TrainResult train_task(const GridSpec& task, const std::vector<int>& policy_hidden,
                       const std::vector<int>& value_hidden, const PpoConfig& cfg,
                       std::uint64_t seed) {
  std::unique_ptr<Env> env = make_env(task);
  return train_on_env(*env, policy_hidden, value_hidden, cfg, seed);
}

GreedyEpisode greedy_episode(const Mlp& policy, Env& env) {
  RngStream rng(0);
  Vec obs = env.reset(rng);
  GreedyEpisode out;
  while (true) {
    int a = greedy_action(policy, obs);
    StepResult r = env.step(a);
    out.episode_return += r.reward;
    out.primitive_steps += r.kappa;
    if (r.terminal || r.truncated) {
      out.terminal = r.terminal;
      break;
    }
    obs = std::move(r.obs);
  }
  return out;
}

}  // namespace optx
