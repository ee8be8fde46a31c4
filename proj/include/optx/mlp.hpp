#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "optx/errors.hpp"

namespace optx {

using Vec = std::vector<double>;

// Dense layer parameters: weights are row-major (out x in).
struct LayerParams {
  int in = 0;
  int out = 0;
  Vec w;
  Vec b;

  static LayerParams zeros(int in, int out) {
    LayerParams p;
    p.in = in;
    p.out = out;
    p.w.assign(static_cast<std::size_t>(in) * out, 0.0);
    p.b.assign(out, 0.0);
    return p;
  }
};

enum class Head { kSoftmax, kSigmoid, kLinear };

std::string head_name(Head h);
Head head_from_name(const std::string& s);

// Per-layer pre-activations and activations kept for backpropagation.
// a[0] is the input; z[l] / a[l] belong to layer l's output (1-based in a).
struct ForwardTrace {
  std::vector<Vec> z;
  std::vector<Vec> a;
};

// Fully connected network with ReLU hidden activations and a configurable
// head. Policies use softmax (or sigmoid with one output unit); value
// networks use a linear head with one output.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> sizes, Head head);

  int input_size() const { return sizes_.empty() ? 0 : sizes_.front(); }
  int output_size() const { return sizes_.empty() ? 0 : sizes_.back(); }
  int hidden_layer_count() const { return static_cast<int>(layers_.size()) - 1; }
  // A network maps to a neural tree only with exactly one hidden layer.
  bool decomposable() const { return layers_.size() == 2; }
  const std::vector<int>& sizes() const { return sizes_; }
  Head head() const { return head_; }

  const std::vector<LayerParams>& layers() const { return layers_; }
  std::vector<LayerParams>& layers() { return layers_; }

  // Pre-head output (logits for policies, raw value for value nets).
  Vec head_input(std::span<const double> x, ForwardTrace* trace = nullptr) const;

  // Head output. Softmax/sigmoid heads return a distribution over actions
  // (sigmoid expands its single unit to the two-action distribution).
  Vec forward(std::span<const double> x, ForwardTrace* trace = nullptr) const;

  // Scalar convenience for value networks.
  double scalar(std::span<const double> x) const;

  void check_finite() const;

 private:
  std::vector<int> sizes_;
  std::vector<LayerParams> layers_;
  Head head_ = Head::kSoftmax;
};

using MlpPolicy = Mlp;
using ValueNet = Mlp;

Vec softmax(std::span<const double> z);
double sigmoid(double z);
Vec apply_head(Head head, std::span<const double> pre);

// Argmax with ties resolved to the lowest index.
int argmax_lowest(std::span<const double> v);

// Greedy action of a policy: argmax over the head distribution
// (equivalently over pre-head logits for softmax), ties to the lowest index.
int greedy_action(const Mlp& policy, std::span<const double> x);

struct PolicyEval {
  Vec probs;
  Vec hidden_preacts;  // first hidden layer pre-activations
};
PolicyEval policy_forward(const Mlp& policy, std::span<const double> x);

enum class InitScheme { kOrthogonal, kZero };

struct InitGains {
  double hidden = std::sqrt(2.0);
  double output = 0.01;
};

// Orthogonal-style initialization: random orthonormal rows/columns scaled by
// the gain, zero biases. Deterministic for a fixed seed.
Mlp init_mlp(const std::vector<int>& sizes, Head head, std::uint64_t seed,
             InitScheme scheme = InitScheme::kOrthogonal, InitGains gains = {});

// Weight-file serialization. Decimal text with shortest round-trip number
// encoding; reload reproduces parameters bit-exactly.
std::string weights_to_json(const Mlp& m);
Mlp weights_from_json(const std::string& text);
void save_weights(const Mlp& m, const std::string& path);
Mlp load_weights(const std::string& path);

}  // namespace optx
