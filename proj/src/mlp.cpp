#include "optx/mlp.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "optx/rng.hpp"

namespace optx {

std::string head_name(Head h) {
  switch (h) {
    case Head::kSoftmax: return "softmax";
    case Head::kSigmoid: return "sigmoid";
    case Head::kLinear: return "linear";
  }
  return "softmax";
}

Head head_from_name(const std::string& s) {
  if (s == "softmax") return Head::kSoftmax;
  if (s == "sigmoid") return Head::kSigmoid;
  if (s == "linear") return Head::kLinear;
  throw SchemaError("unknown head kind: " + s);
}

Mlp::Mlp(std::vector<int> sizes, Head head) : sizes_(std::move(sizes)), head_(head) {
  if (sizes_.size() < 2) throw ShapeError("Mlp needs at least input and output sizes");
  for (int s : sizes_) {
    if (s <= 0) throw ShapeError("Mlp layer sizes must be positive");
  }
  if (head_ == Head::kSigmoid && sizes_.back() != 1) {
    throw ShapeError("sigmoid head requires exactly one output unit");
  }
  layers_.reserve(sizes_.size() - 1);
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    layers_.push_back(LayerParams::zeros(sizes_[i], sizes_[i + 1]));
  }
}

Vec Mlp::head_input(std::span<const double> x, ForwardTrace* trace) const {
  if (static_cast<int>(x.size()) != input_size()) {
    throw ShapeError("Mlp forward: input size " + std::to_string(x.size()) +
                     " != expected " + std::to_string(input_size()));
  }
  Vec a(x.begin(), x.end());
  if (trace) {
    trace->z.clear();
    trace->a.clear();
    trace->a.push_back(a);
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerParams& p = layers_[l];
    Vec z(p.out, 0.0);
    for (int r = 0; r < p.out; ++r) {
      const double* wr = &p.w[static_cast<std::size_t>(r) * p.in];
      double acc = p.b[r];
      for (int c = 0; c < p.in; ++c) acc += wr[c] * a[c];
      z[r] = acc;
    }
    if (trace) trace->z.push_back(z);
    if (l + 1 < layers_.size()) {
      // std::max(v, 0.0) rather than a comparison so NaN parameters surface
      // at the head instead of being silently zeroed.
      for (double& v : z) v = std::max(v, 0.0);
    }
    if (trace) trace->a.push_back(z);
    a = std::move(z);
  }
  return a;
}

Vec Mlp::forward(std::span<const double> x, ForwardTrace* trace) const {
  Vec pre = head_input(x, trace);
  return apply_head(head_, pre);
}

double Mlp::scalar(std::span<const double> x) const {
  Vec pre = head_input(x);
  if (pre.size() != 1) throw ShapeError("Mlp::scalar on multi-output network");
  return head_ == Head::kSigmoid ? sigmoid(pre[0]) : pre[0];
}

void Mlp::check_finite() const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (double v : layers_[l].w) {
      if (!std::isfinite(v)) throw NumericError("non-finite weight in layer " + std::to_string(l));
    }
    for (double v : layers_[l].b) {
      if (!std::isfinite(v)) throw NumericError("non-finite bias in layer " + std::to_string(l));
    }
  }
}

Vec softmax(std::span<const double> z) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) m = std::max(m, v);
  if (!std::isfinite(m)) throw NumericError("softmax over non-finite logits");
  Vec p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

Vec apply_head(Head head, std::span<const double> pre) {
  switch (head) {
    case Head::kSoftmax:
      return softmax(pre);
    case Head::kSigmoid: {
      if (pre.size() != 1) throw ShapeError("sigmoid head expects one unit");
      if (!std::isfinite(pre[0])) throw NumericError("sigmoid over non-finite logit");
      double p1 = sigmoid(pre[0]);
      return {1.0 - p1, p1};
    }
    case Head::kLinear:
      return Vec(pre.begin(), pre.end());
  }
  return {};
}

int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}

int greedy_action(const Mlp& policy, std::span<const double> x) {
  Vec pre = policy.head_input(x);
  if (policy.head() == Head::kSigmoid) {
    return pre[0] > 0.0 ? 1 : 0;
  }
  return argmax_lowest(pre);
}

PolicyEval policy_forward(const Mlp& policy, std::span<const double> x) {
  ForwardTrace trace;
  Vec probs = policy.forward(x, &trace);
  PolicyEval out;
  out.probs = std::move(probs);
  out.hidden_preacts = trace.z.empty() ? Vec{} : trace.z.front();
  return out;
}

namespace {

// Orthonormal rows of an n x n matrix via modified Gram-Schmidt.
std::vector<Vec> orthonormal_square(int n, RngStream& rng) {
  std::vector<Vec> rows(n, Vec(n));
  for (auto& r : rows) {
    for (double& v : r) v = rng.next_gaussian();
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int k = 0; k < n; ++k) dot += rows[i][k] * rows[j][k];
      for (int k = 0; k < n; ++k) rows[i][k] -= dot * rows[j][k];
    }
    double norm = 0.0;
    for (int k = 0; k < n; ++k) norm += rows[i][k] * rows[i][k];
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      // Degenerate draw; restart the row with fresh noise.
      for (double& v : rows[i]) v = rng.next_gaussian();
      --i;
      continue;
    }
    for (int k = 0; k < n; ++k) rows[i][k] /= norm;
  }
  return rows;
}

}  // namespace

Mlp init_mlp(const std::vector<int>& sizes, Head head, std::uint64_t seed,
             InitScheme scheme, InitGains gains) {
  Mlp m(sizes, head);
  if (scheme == InitScheme::kZero) return m;
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    LayerParams& p = m.layers()[l];
    const bool is_output = (l + 1 == m.layers().size());
    const double gain = is_output ? gains.output : gains.hidden;
    RngStream rng(seed, l);
    const int n = std::max(p.out, p.in);
    std::vector<Vec> q = orthonormal_square(n, rng);
    for (int r = 0; r < p.out; ++r) {
      for (int c = 0; c < p.in; ++c) {
        p.w[static_cast<std::size_t>(r) * p.in + c] = gain * q[r][c];
      }
    }
  }
  return m;
}

std::string weights_to_json(const Mlp& m) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["head"] = head_name(m.head());
  j["layer_sizes"] = m.sizes();
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerParams& p : m.layers()) {
    nlohmann::json jl;
    jl["weights"] = p.w;
    jl["biases"] = p.b;
    layers.push_back(std::move(jl));
  }
  j["layers"] = std::move(layers);
  return j.dump(2) + "\n";
}

Mlp weights_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("weight file parse error: ") + e.what(), e.byte);
  }
  try {
    if (!j.contains("format_version") || j["format_version"].get<int>() != 1) {
      throw SchemaError("weight file: unsupported format_version");
    }
    Head head = head_from_name(j.at("head").get<std::string>());
    std::vector<int> sizes = j.at("layer_sizes").get<std::vector<int>>();
    Mlp m(sizes, head);
    const auto& layers = j.at("layers");
    if (layers.size() != sizes.size() - 1) {
      throw SchemaError("weight file: expected " + std::to_string(sizes.size() - 1) +
                        " layers, found " + std::to_string(layers.size()));
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Vec w = layers[l].at("weights").get<Vec>();
      Vec b = layers[l].at("biases").get<Vec>();
      LayerParams& p = m.layers()[l];
      if (w.size() != p.w.size() || b.size() != p.b.size()) {
        throw SchemaError("weight file: dimension mismatch in layer " + std::to_string(l) +
                          " (expected " + std::to_string(p.w.size()) + "+" +
                          std::to_string(p.b.size()) + " values)");
      }
      p.w = std::move(w);
      p.b = std::move(b);
    }
    m.check_finite();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("weight file: ") + e.what());
  }
}

void save_weights(const Mlp& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << weights_to_json(m);
  if (!out) throw IoError("write failed: " + path);
}

Mlp load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return weights_from_json(ss.str());
}

}  // namespace optx
