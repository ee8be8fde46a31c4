#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "optx/mlp.hpp"

namespace optx {

// Widest hidden layer the decomposition will enumerate (3^d masks).
inline constexpr int kDefaultDecompositionCap = 14;

enum class MaskState : std::uint8_t { kFree, kClampedOff, kClampedOn };

// One entry per hidden neuron; kFree leaves the ReLU in place, the clamped
// states pin the unit to one side of its piecewise-linear split.
using ActivationMask = std::vector<MaskState>;

// Sub-policy of a one-hidden-layer policy: the source network with a mask.
struct SubPolicy {
  const Mlp* policy = nullptr;
  ActivationMask mask;
  int source_task = -1;
};

// Nodes of the neural tree. Internal nodes test coeffs.x + offset <= 0
// (left = inactive) vs > 0 (right = active). Leaves hold the output layer
// composed down to a linear map of the input.
struct NeuralTreeNode {
  bool is_leaf = false;
  Vec coeffs;
  double offset = 0.0;
  int left = -1;
  int right = -1;
  Vec leaf_w;  // row-major (output_size x input_size)
  Vec leaf_b;
};

struct NeuralTree {
  std::vector<NeuralTreeNode> nodes;
  int root = 0;
  int depth = 0;
  int input_size = 0;
  int output_size = 0;
  Head head = Head::kSoftmax;
};

// Maps a one-hidden-layer ReLU policy to its equivalent tree. Hidden neurons
// appear along every root-to-leaf path in index order.
NeuralTree build_neural_tree(const Mlp& policy);

// Evaluates the tree; agrees with the source network's forward pass.
Vec tree_forward(const NeuralTree& tree, std::span<const double> x);

// Index (0-based, left to right) of the leaf an input routes to.
int tree_leaf_index(const NeuralTree& tree, std::span<const double> x);

// All 3^d masks over the d hidden neurons, the all-free mask first.
// Throws ConfigError when d exceeds the cap.
std::vector<SubPolicy> enumerate_subpolicies(const Mlp& policy, int source_task = -1,
                                             int depth_cap = kDefaultDecompositionCap);

// Pre-head output under the mask: clamped-off units contribute zero,
// clamped-on units their raw pre-activation, free units pass through ReLU.
Vec subpolicy_head_input(const SubPolicy& sub, std::span<const double> x);
Vec subpolicy_forward(const SubPolicy& sub, std::span<const double> x);
int subpolicy_greedy_action(const SubPolicy& sub, std::span<const double> x);

// Same rule, starting from precomputed hidden pre-activations. Fast path for
// candidate scoring where many masks share one forward pass.
int subpolicy_greedy_action_from_preacts(const SubPolicy& sub,
                                         std::span<const double> hidden_preacts);

std::string mask_to_string(const ActivationMask& mask);
ActivationMask mask_from_string(const std::string& s);

// Human-readable dump: one line per node with its linear form.
std::string dump_tree(const NeuralTree& tree);

}  // namespace optx
