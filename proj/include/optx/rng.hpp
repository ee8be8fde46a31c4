#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace optx {

// Deterministic random stream. Raw mt19937_64 output is pinned by the
// standard, so all distributions are derived here by hand instead of going
// through <random>'s implementation-defined adapters. Streams with the same
// seed but different stream ids are statistically independent.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double next_double();

  // Standard normal (Box-Muller, cached spare).
  double next_gaussian();

  // Uniform integer in [0, n). n must be positive.
  int next_int(int n);

  // Index sampled proportionally to probs (assumed to sum to ~1).
  int sample_categorical(std::span<const double> probs);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stateless mixing of a seed with a salt, for deriving per-task/per-worker
// seeds from one experiment seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace optx
