#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (key, counter): the SplitMix64 finalizer applied to
// key + (counter + 1)·0x9E3779B97F4A7C15. Per-pixel noise uses the pixel
// index as the counter, so a field's values never depend on the order in
// which pixels are visited.

#include <cstdint>

namespace scnet {

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t counter_hash(std::uint64_t key, std::uint64_t counter) {
  return splitmix64_mix(key + (counter + 1) * 0x9E3779B97F4A7C15ULL);
}

/// Key for an independent stream derived from a parent seed and a tag.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64_mix(seed ^ splitmix64_mix(tag + 0x632BE59BD9B4E019ULL));
}

/// Uniform in the open interval (0, 1).
inline double to_unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double counter_uniform(std::uint64_t key, std::uint64_t counter);
/// Standard normal by Box–Muller from counters 2·counter and 2·counter+1.
double counter_normal(std::uint64_t key, std::uint64_t counter);

/// Sequential view of the counter generator; its whole state is (key, counter).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key = 0, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

  std::uint64_t next_u64() { return counter_hash(key_, counter_++); }
  double uniform() { return to_unit_open(next_u64()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace scnet
