#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace slotgram {

// Deterministic RNG used wherever randomness is needed. mt19937_64 has a
// fully specified output sequence; the helpers below avoid the <random>
// distribution classes, whose output is implementation-defined, so a seed
// produces the same stream on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % n);
  }

  template <typename T>
  const T& pick(const std::vector<T>& xs) {
    return xs[index(xs.size())];
  }

  // Cumulative-weight draw; weights need not be normalized.
  std::size_t weighted_index(const std::vector<double>& weights) {
    if (weights.empty()) return 0;
    double total = 0.0;
    for (double w : weights) total += w;
    const double r = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (r < acc) return i;
    }
    return weights.size() - 1;
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      std::swap(xs[i - 1], xs[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace slotgram
