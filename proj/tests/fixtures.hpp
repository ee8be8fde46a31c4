#pragma once

#include <vector>

#include "optx/grid.hpp"
#include "optx/mlp.hpp"
#include "optx/rng.hpp"

namespace optx::testfix {

// Two inputs, two ReLU hidden units, one sigmoid output; all biases 1.
// Hidden weights (2,1) and (-2,-1), output weights (-1,1).
inline Mlp sigmoid_pair_network() {
  Mlp m({2, 2, 1}, Head::kSigmoid);
  m.layers()[0].w = {2, 1, -2, -1};
  m.layers()[0].b = {1, 1};
  m.layers()[1].w = {-1, 1};
  m.layers()[1].b = {1};
  return m;
}

inline Mlp random_policy(int n_in, int hidden, int n_actions, RngStream& rng,
                         double scale = 1.0) {
  Mlp m({n_in, hidden, n_actions}, Head::kSoftmax);
  for (auto& layer : m.layers()) {
    for (double& w : layer.w) w = scale * rng.next_gaussian();
    for (double& b : layer.b) b = scale * rng.next_gaussian();
  }
  return m;
}

inline Vec random_input(int n, RngStream& rng, double scale = 1.0) {
  Vec x(n);
  for (double& v : x) v = scale * rng.next_gaussian();
  return x;
}

// Hand-built one-hidden-layer policy that endlessly executes one combo by
// reading the buffer slots of the ComboGrid observation. Hidden unit i fires
// when slot i holds the i-th action of the combo; escalating output weights
// make the argmax walk through the combo in order.
inline Mlp combo_direction_policy(int w, int dir) {
  const int n_in = 2 * w * w + 9;
  const int base = 2 * w * w;
  Mlp m({n_in, 3, 3}, Head::kSoftmax);
  LayerParams& h = m.layers()[0];
  LayerParams& o = m.layers()[1];
  for (int i = 0; i < 3; ++i) {
    h.w[static_cast<std::size_t>(i) * n_in + base + 3 * i + kCombos[dir][i]] = 1.0;
  }
  o.b[kCombos[dir][0]] = 1.0;
  double gain = 4.0;
  for (int step = 1; step <= 3; ++step) {
    o.w[static_cast<std::size_t>(kCombos[dir][step]) * 3 + (step - 1)] += gain;
    gain *= 4.0;
  }
  return m;
}

inline GridSpec combo_task(int w, Phase phase, Cell start, std::vector<Cell> goals,
                           const std::string& id = "test-task") {
  GridSpec t;
  t.id = id;
  t.domain = DomainKind::kComboGrid;
  t.width = w;
  t.height = w;
  t.start_candidates = {start};
  t.goals = std::move(goals);
  t.phase = phase;
  t.max_steps = phase == Phase::kSource ? w * w * 80 : w * w * 16;
  t.validate();
  return t;
}

}  // namespace optx::testfix
