#ifndef UGC_RNG_HPP
#define UGC_RNG_HPP

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace ugc {

uint64_t splitmix64(uint64_t x);
uint64_t fnv1a64(std::string_view s);

/// Derives the seed of a named substream from the global run seed, so that
/// each component (data, sandwich, evolution, gates, ...) draws from an
/// independent, individually reproducible stream.
uint64_t substream_seed(uint64_t global_seed, std::string_view name);

/// Deterministic random stream. All randomness in the project flows through
/// this wrapper; draws are stdlib-independent so artifacts reproduce across
/// toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [lo, hi], inclusive. Rejection-sampled, unbiased.
  int64_t uniform_int(int64_t lo, int64_t hi);

  /// Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  const T& choice(const std::vector<T>& items) {
    return items[static_cast<size_t>(uniform_int(0, static_cast<int64_t>(items.size()) - 1))];
  }

  /// Fisher-Yates shuffle of indices [0, n).
  std::vector<int64_t> permutation(int64_t n);

  std::string serialize() const;
  void deserialize(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

}  // namespace ugc

#endif
