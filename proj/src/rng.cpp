#include "optx/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace optx {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(splitmix64(seed) ^ splitmix64(salt * 0xd6e8feb86659fd93ULL + 1));
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : gen_(mix_seed(seed, stream)) {}

double RngStream::next_double() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is finite.
  double u1 = 1.0 - next_double();
  double u2 = next_double();
  double radius = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  have_spare_ = true;
  return radius * std::cos(angle);
}

int RngStream::next_int(int n) {
  if (n <= 0) throw std::invalid_argument("RngStream::next_int: n must be positive");
  // Rejection sampling keeps the draw unbiased and platform-stable.
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return static_cast<int>(x % un);
}

int RngStream::sample_categorical(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("sample_categorical: empty distribution");
  double u = next_double();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

}  // namespace optx
