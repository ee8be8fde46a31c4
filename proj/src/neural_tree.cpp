#include "optx/neural_tree.hpp"

#include <cmath>
#include <sstream>

namespace optx {

namespace {

void require_decomposable(const Mlp& policy) {
  if (!policy.decomposable()) {
    throw ShapeError("decomposition requires exactly one hidden layer, network has " +
                     std::to_string(policy.hidden_layer_count()));
  }
}

// Builds the subtree for neurons [k, d) given the activation pattern chosen
// so far; returns the node index.
int build_rec(const Mlp& policy, int k, std::vector<bool>& active, NeuralTree& tree) {
  const LayerParams& hidden = policy.layers()[0];
  const LayerParams& out = policy.layers()[1];
  const int d = hidden.out;
  const int n_in = hidden.in;
  const int n_out = out.out;

  NeuralTreeNode node;
  int idx = static_cast<int>(tree.nodes.size());
  if (k == d) {
    node.is_leaf = true;
    node.leaf_w.assign(static_cast<std::size_t>(n_out) * n_in, 0.0);
    node.leaf_b.assign(out.b.begin(), out.b.end());
    for (int r = 0; r < n_out; ++r) {
      for (int u = 0; u < d; ++u) {
        if (!active[u]) continue;
        const double wu = out.w[static_cast<std::size_t>(r) * d + u];
        for (int c = 0; c < n_in; ++c) {
          node.leaf_w[static_cast<std::size_t>(r) * n_in + c] +=
              wu * hidden.w[static_cast<std::size_t>(u) * n_in + c];
        }
        node.leaf_b[r] += wu * hidden.b[u];
      }
    }
    tree.nodes.push_back(std::move(node));
    return idx;
  }
  node.coeffs.assign(hidden.w.begin() + static_cast<std::size_t>(k) * n_in,
                     hidden.w.begin() + static_cast<std::size_t>(k + 1) * n_in);
  node.offset = hidden.b[k];
  tree.nodes.push_back(std::move(node));

  active[k] = false;
  int left = build_rec(policy, k + 1, active, tree);
  active[k] = true;
  int right = build_rec(policy, k + 1, active, tree);
  tree.nodes[idx].left = left;
  tree.nodes[idx].right = right;
  return idx;
}

}  // namespace

NeuralTree build_neural_tree(const Mlp& policy) {
  require_decomposable(policy);
  const int d = policy.layers()[0].out;
  if (d > kDefaultDecompositionCap) {
    throw ConfigError("hidden width " + std::to_string(d) + " exceeds decomposition cap " +
                      std::to_string(kDefaultDecompositionCap));
  }
  NeuralTree tree;
  tree.depth = d;
  tree.input_size = policy.input_size();
  tree.output_size = policy.layers()[1].out;
  tree.head = policy.head();
  tree.nodes.reserve((std::size_t{2} << d) - 1);
  std::vector<bool> active(d, false);
  tree.root = build_rec(policy, 0, active, tree);
  return tree;
}

namespace {

int descend(const NeuralTree& tree, std::span<const double> x) {
  if (static_cast<int>(x.size()) != tree.input_size) {
    throw ShapeError("tree_forward: input size mismatch");
  }
  int idx = tree.root;
  while (!tree.nodes[idx].is_leaf) {
    const NeuralTreeNode& n = tree.nodes[idx];
    double z = n.offset;
    for (std::size_t i = 0; i < n.coeffs.size(); ++i) z += n.coeffs[i] * x[i];
    idx = z <= 0.0 ? n.left : n.right;
  }
  return idx;
}

}  // namespace

Vec tree_forward(const NeuralTree& tree, std::span<const double> x) {
  const NeuralTreeNode& leaf = tree.nodes[descend(tree, x)];
  Vec pre(tree.output_size, 0.0);
  for (int r = 0; r < tree.output_size; ++r) {
    double acc = leaf.leaf_b[r];
    const double* wr = &leaf.leaf_w[static_cast<std::size_t>(r) * tree.input_size];
    for (int c = 0; c < tree.input_size; ++c) acc += wr[c] * x[c];
    pre[r] = acc;
  }
  return apply_head(tree.head, pre);
}

int tree_leaf_index(const NeuralTree& tree, std::span<const double> x) {
  // Leaves are visited left-to-right by the preorder construction; recover
  // the rank from the activation pattern (bit k set = neuron k active).
  if (static_cast<int>(x.size()) != tree.input_size) {
    throw ShapeError("tree_leaf_index: input size mismatch");
  }
  int rank = 0;
  int idx = tree.root;
  while (!tree.nodes[idx].is_leaf) {
    const NeuralTreeNode& n = tree.nodes[idx];
    double z = n.offset;
    for (std::size_t i = 0; i < n.coeffs.size(); ++i) z += n.coeffs[i] * x[i];
    rank <<= 1;
    if (z <= 0.0) {
      idx = n.left;
    } else {
      rank |= 1;
      idx = n.right;
    }
  }
  return rank;
}

std::vector<SubPolicy> enumerate_subpolicies(const Mlp& policy, int source_task, int depth_cap) {
  require_decomposable(policy);
  const int d = policy.layers()[0].out;
  if (d > depth_cap) {
    throw ConfigError("hidden width " + std::to_string(d) +
                      " exceeds enumeration cap " + std::to_string(depth_cap));
  }
  std::size_t count = 1;
  for (int i = 0; i < d; ++i) count *= 3;
  std::vector<SubPolicy> subs;
  subs.reserve(count);
  ActivationMask mask(d, MaskState::kFree);
  for (std::size_t m = 0; m < count; ++m) {
    std::size_t t = m;
    for (int k = 0; k < d; ++k) {
      switch (t % 3) {
        case 0: mask[k] = MaskState::kFree; break;
        case 1: mask[k] = MaskState::kClampedOff; break;
        default: mask[k] = MaskState::kClampedOn; break;
      }
      t /= 3;
    }
    subs.push_back(SubPolicy{&policy, mask, source_task});
  }
  return subs;
}

Vec subpolicy_head_input(const SubPolicy& sub, std::span<const double> x) {
  const Mlp& policy = *sub.policy;
  require_decomposable(policy);
  const LayerParams& hidden = policy.layers()[0];
  const LayerParams& out = policy.layers()[1];
  if (static_cast<int>(x.size()) != hidden.in) {
    throw ShapeError("subpolicy_forward: input size mismatch");
  }
  if (static_cast<int>(sub.mask.size()) != hidden.out) {
    throw ShapeError("subpolicy mask length != hidden width");
  }
  Vec h(hidden.out, 0.0);
  for (int u = 0; u < hidden.out; ++u) {
    if (sub.mask[u] == MaskState::kClampedOff) continue;
    double z = hidden.b[u];
    const double* wr = &hidden.w[static_cast<std::size_t>(u) * hidden.in];
    for (int c = 0; c < hidden.in; ++c) z += wr[c] * x[c];
    h[u] = sub.mask[u] == MaskState::kClampedOn ? z : std::max(z, 0.0);
  }
  Vec pre(out.out, 0.0);
  for (int r = 0; r < out.out; ++r) {
    double acc = out.b[r];
    const double* wr = &out.w[static_cast<std::size_t>(r) * out.in];
    for (int c = 0; c < out.in; ++c) acc += wr[c] * h[c];
    pre[r] = acc;
  }
  return pre;
}

Vec subpolicy_forward(const SubPolicy& sub, std::span<const double> x) {
  return apply_head(sub.policy->head(), subpolicy_head_input(sub, x));
}

int subpolicy_greedy_action(const SubPolicy& sub, std::span<const double> x) {
  Vec pre = subpolicy_head_input(sub, x);
  if (sub.policy->head() == Head::kSigmoid) return pre[0] > 0.0 ? 1 : 0;
  return argmax_lowest(pre);
}

int subpolicy_greedy_action_from_preacts(const SubPolicy& sub,
                                         std::span<const double> hidden_preacts) {
  const LayerParams& out = sub.policy->layers()[1];
  if (static_cast<int>(hidden_preacts.size()) != out.in) {
    throw ShapeError("hidden pre-activation length mismatch");
  }
  double best = 0.0;
  int best_idx = 0;
  for (int r = 0; r < out.out; ++r) {
    double acc = out.b[r];
    const double* wr = &out.w[static_cast<std::size_t>(r) * out.in];
    for (int u = 0; u < out.in; ++u) {
      double h;
      switch (sub.mask[u]) {
        case MaskState::kClampedOff: h = 0.0; break;
        case MaskState::kClampedOn: h = hidden_preacts[u]; break;
        default: h = std::max(hidden_preacts[u], 0.0); break;
      }
      acc += wr[u] * h;
    }
    if (r == 0 || acc > best) {
      best = acc;
      best_idx = r;
    }
  }
  if (sub.policy->head() == Head::kSigmoid) return best > 0.0 ? 1 : 0;
  return best_idx;
}

std::string mask_to_string(const ActivationMask& mask) {
  std::string s;
  s.reserve(mask.size());
  for (MaskState m : mask) {
    switch (m) {
      case MaskState::kFree: s.push_back('F'); break;
      case MaskState::kClampedOff: s.push_back('-'); break;
      case MaskState::kClampedOn: s.push_back('+'); break;
    }
  }
  return s;
}

ActivationMask mask_from_string(const std::string& s) {
  ActivationMask mask;
  mask.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case 'F': mask.push_back(MaskState::kFree); break;
      case '-': mask.push_back(MaskState::kClampedOff); break;
      case '+': mask.push_back(MaskState::kClampedOn); break;
      default: throw SchemaError(std::string("invalid mask character '") + c + "'");
    }
  }
  return mask;
}

namespace {

std::string linear_form(std::span<const double> coeffs, double offset) {
  std::ostringstream os;
  bool first = true;
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    if (coeffs[i] == 0.0) continue;
    if (!first) os << (coeffs[i] >= 0.0 ? " + " : " - ");
    else if (coeffs[i] < 0.0) os << "-";
    first = false;
    os << std::abs(coeffs[i]) << "*x" << (i + 1);
  }
  if (first) {
    os << offset;
    return os.str();
  }
  if (offset != 0.0) os << (offset >= 0.0 ? " + " : " - ") << std::abs(offset);
  return os.str();
}

void dump_rec(const NeuralTree& tree, int idx, int depth, std::ostringstream& os) {
  const NeuralTreeNode& n = tree.nodes[idx];
  for (int i = 0; i < depth; ++i) os << "  ";
  if (n.is_leaf) {
    os << "leaf:";
    for (int r = 0; r < tree.output_size; ++r) {
      std::span<const double> row(&n.leaf_w[static_cast<std::size_t>(r) * tree.input_size],
                                  static_cast<std::size_t>(tree.input_size));
      os << " [" << linear_form(row, n.leaf_b[r]) << "]";
    }
    os << "\n";
    return;
  }
  os << "node: " << linear_form(n.coeffs, n.offset) << " <= 0 ?\n";
  dump_rec(tree, n.left, depth + 1, os);
  dump_rec(tree, n.right, depth + 1, os);
}

}  // namespace

std::string dump_tree(const NeuralTree& tree) {
  std::ostringstream os;
  dump_rec(tree, tree.root, 0, os);
  return os.str();
}

}  // namespace optx
