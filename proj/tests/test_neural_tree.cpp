#include "doctest.h"

#include <cmath>

#include "fixtures.hpp"
#include "optx/neural_tree.hpp"

using namespace optx;

namespace {

const NeuralTreeNode& leaf_at(const NeuralTree& tree, int rank) {
  int idx = tree.root;
  for (int bit = tree.depth - 1; bit >= 0; --bit) {
    idx = (rank >> bit) & 1 ? tree.nodes[idx].right : tree.nodes[idx].left;
  }
  return tree.nodes[idx];
}

}  // namespace

TEST_CASE("tree of the sigmoid pair network matches the known linear forms") {
  Mlp m = testfix::sigmoid_pair_network();
  NeuralTree tree = build_neural_tree(m);
  REQUIRE(tree.depth == 2);
  REQUIRE(tree.nodes.size() == 7);

  const NeuralTreeNode& root = tree.nodes[tree.root];
  REQUIRE(!root.is_leaf);
  CHECK(root.coeffs[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(root.coeffs[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(root.offset == doctest::Approx(1.0).epsilon(1e-12));

  for (int child : {root.left, root.right}) {
    const NeuralTreeNode& n = tree.nodes[child];
    REQUIRE(!n.is_leaf);
    CHECK(n.coeffs[0] == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(n.coeffs[1] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(n.offset == doctest::Approx(1.0).epsilon(1e-12));
  }

  // Left to right: sigma(1), sigma(-2x1-x2+2), sigma(-2x1-x2), sigma(-4x1-2x2+1).
  const double expected[4][3] = {
      {0.0, 0.0, 1.0}, {-2.0, -1.0, 2.0}, {-2.0, -1.0, 0.0}, {-4.0, -2.0, 1.0}};
  for (int rank = 0; rank < 4; ++rank) {
    const NeuralTreeNode& leaf = leaf_at(tree, rank);
    REQUIRE(leaf.is_leaf);
    CHECK(std::abs(leaf.leaf_w[0] - expected[rank][0]) <= 1e-12);
    CHECK(std::abs(leaf.leaf_w[1] - expected[rank][1]) <= 1e-12);
    CHECK(std::abs(leaf.leaf_b[0] - expected[rank][2]) <= 1e-12);
  }

  // Inference fixtures: (0,0) lands in the both-active region, (10,10)
  // follows the right branch at the root.
  Vec p = tree_forward(tree, Vec{0.0, 0.0});
  CHECK(p[1] == doctest::Approx(sigmoid(1.0)).epsilon(1e-12));
  CHECK(tree_leaf_index(tree, Vec{0.0, 0.0}) == 3);
  CHECK((tree_leaf_index(tree, Vec{10.0, 10.0}) & 2) == 2);
}

TEST_CASE("constant-negative hidden units route everything to the all-inactive leaf") {
  Mlp m({3, 2, 2}, Head::kSoftmax);
  m.layers()[0].b = {-1.0, -1.0};
  m.layers()[1].w = {1.0, 2.0, -1.0, 0.5};
  m.layers()[1].b = {0.25, -0.25};
  NeuralTree tree = build_neural_tree(m);
  RngStream rng(6);
  for (int i = 0; i < 100; ++i) {
    Vec x = testfix::random_input(3, rng, 3.0);
    CHECK(tree_leaf_index(tree, x) == 0);
  }
}

TEST_CASE("leaf maps equal the per-pattern algebraic composition") {
  RngStream rng(77);
  Mlp m = testfix::random_policy(5, 4, 3, rng);
  NeuralTree tree = build_neural_tree(m);
  int leaves = 0;
  for (const auto& node : tree.nodes) leaves += node.is_leaf ? 1 : 0;
  CHECK(leaves == 16);

  const LayerParams& h = m.layers()[0];
  const LayerParams& o = m.layers()[1];
  for (int pattern = 0; pattern < 16; ++pattern) {
    const NeuralTreeNode& leaf = leaf_at(tree, pattern);
    for (int r = 0; r < o.out; ++r) {
      double b = o.b[r];
      Vec w(h.in, 0.0);
      for (int u = 0; u < h.out; ++u) {
        if (!((pattern >> (h.out - 1 - u)) & 1)) continue;
        for (int c = 0; c < h.in; ++c) w[c] += o.w[r * h.out + u] * h.w[u * h.in + c];
        b += o.w[r * h.out + u] * h.b[u];
      }
      for (int c = 0; c < h.in; ++c) {
        CHECK(leaf.leaf_w[r * h.in + c] == doctest::Approx(w[c]).epsilon(1e-12));
      }
      CHECK(leaf.leaf_b[r] == doctest::Approx(b).epsilon(1e-12));
    }
  }
}

TEST_CASE("tree evaluation equals the network forward pass") {
  RngStream rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    int d = 1 + rng.next_int(5);
    Mlp m = testfix::random_policy(4, d, 3, rng);
    NeuralTree tree = build_neural_tree(m);
    for (int i = 0; i < 10; ++i) {
      Vec x = testfix::random_input(4, rng, 2.0);
      Vec a = m.forward(x);
      Vec b = tree_forward(tree, x);
      for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) <= 1e-9);
    }
  }
}

TEST_CASE("leaf reached matches the sign pattern of hidden pre-activations") {
  RngStream rng(505);
  Mlp m = testfix::random_policy(3, 4, 2, rng);
  NeuralTree tree = build_neural_tree(m);
  for (int i = 0; i < 200; ++i) {
    Vec x = testfix::random_input(3, rng, 2.0);
    PolicyEval eval = policy_forward(m, x);
    int pattern = 0;
    for (int u = 0; u < 4; ++u) {
      pattern = (pattern << 1) | (eval.hidden_preacts[u] > 0.0 ? 1 : 0);
    }
    CHECK(tree_leaf_index(tree, x) == pattern);
  }
  // A pre-activation of exactly zero follows the inactive branch.
  Mlp fixture = testfix::sigmoid_pair_network();
  NeuralTree ftree = build_neural_tree(fixture);
  // Root test 2*0 + (-1) + 1 = 0 -> left; second unit 0 + 1 + 1 = 2 > 0 -> right.
  CHECK(tree_leaf_index(ftree, Vec{0.0, -1.0}) == 1);
}

TEST_CASE("sub-policy enumeration counts 3^d masks with all-free first") {
  RngStream rng(9);
  for (int d = 1; d <= 8; ++d) {
    Mlp m = testfix::random_policy(3, d, 2, rng);
    auto subs = enumerate_subpolicies(m);
    std::size_t expected = 1;
    for (int i = 0; i < d; ++i) expected *= 3;
    CHECK(subs.size() == expected);
    for (MaskState s : subs[0].mask) CHECK(s == MaskState::kFree);
  }
  Mlp m2 = testfix::random_policy(3, 2, 2, rng);
  CHECK(enumerate_subpolicies(m2).size() == 9);
  CHECK(enumerate_subpolicies(testfix::random_policy(3, 1, 2, rng)).size() == 3);
}

TEST_CASE("enumeration cap rejects overly wide hidden layers") {
  Mlp wide({2, 15, 2}, Head::kSoftmax);
  CHECK_THROWS_AS(enumerate_subpolicies(wide), ConfigError);
  CHECK(enumerate_subpolicies(wide, -1, 15).size() == 14348907u);
}

TEST_CASE("multi-hidden-layer networks are rejected") {
  Mlp deep({3, 4, 4, 2}, Head::kSoftmax);
  CHECK_THROWS_AS(build_neural_tree(deep), ShapeError);
  CHECK_THROWS_AS(enumerate_subpolicies(deep), ShapeError);
}

TEST_CASE("masked sub-policies of the sigmoid pair network") {
  Mlp m = testfix::sigmoid_pair_network();
  RngStream rng(31);

  SubPolicy on_off{&m, {MaskState::kClampedOn, MaskState::kClampedOff}, -1};
  SubPolicy off_off{&m, {MaskState::kClampedOff, MaskState::kClampedOff}, -1};
  SubPolicy all_free{&m, {MaskState::kFree, MaskState::kFree}, -1};
  for (int i = 0; i < 50; ++i) {
    Vec x = testfix::random_input(2, rng, 2.0);
    CHECK(subpolicy_forward(on_off, x)[1] ==
          doctest::Approx(sigmoid(-2 * x[0] - x[1])).epsilon(1e-12));
    CHECK(subpolicy_forward(off_off, x)[1] == doctest::Approx(sigmoid(1.0)).epsilon(1e-12));
    CHECK(subpolicy_forward(all_free, x) == m.forward(x));
  }
}

TEST_CASE("fully clamped masks are linear before the head") {
  RngStream rng(66);
  Mlp m = testfix::random_policy(4, 3, 3, rng);
  SubPolicy sub{&m,
                {MaskState::kClampedOn, MaskState::kClampedOff, MaskState::kClampedOn},
                -1};
  // Compare against the affine map fitted from basis probes.
  Vec at0 = subpolicy_head_input(sub, Vec{0, 0, 0, 0});
  for (int trial = 0; trial < 30; ++trial) {
    Vec x = testfix::random_input(4, rng, 2.0);
    Vec y = testfix::random_input(4, rng, 2.0);
    Vec xy(4);
    for (int i = 0; i < 4; ++i) xy[i] = x[i] + y[i];
    Vec fx = subpolicy_head_input(sub, x);
    Vec fy = subpolicy_head_input(sub, y);
    Vec fxy = subpolicy_head_input(sub, xy);
    for (std::size_t k = 0; k < fx.size(); ++k) {
      // Additivity of the centered map: f(x+y) - f(0) = (f(x)-f(0)) + (f(y)-f(0)).
      CHECK(fxy[k] - at0[k] ==
            doctest::Approx((fx[k] - at0[k]) + (fy[k] - at0[k])).epsilon(1e-9));
    }
  }
}

TEST_CASE("greedy action from cached pre-activations agrees with the direct path") {
  RngStream rng(14);
  Mlp m = testfix::random_policy(6, 4, 3, rng);
  auto subs = enumerate_subpolicies(m);
  for (int i = 0; i < 50; ++i) {
    Vec x = testfix::random_input(6, rng);
    PolicyEval eval = policy_forward(m, x);
    for (const SubPolicy& sub : subs) {
      CHECK(subpolicy_greedy_action(sub, x) ==
            subpolicy_greedy_action_from_preacts(sub, eval.hidden_preacts));
    }
  }
}

TEST_CASE("tree dump shows the root linear form") {
  Mlp m = testfix::sigmoid_pair_network();
  std::string dump = dump_tree(build_neural_tree(m));
  CHECK(dump.find("2*x1 + 1*x2 + 1") != std::string::npos);
  CHECK(dump.find("leaf:") != std::string::npos);
}
