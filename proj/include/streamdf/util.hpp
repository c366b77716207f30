#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamdf {

// SplitMix64. Deterministic across platforms and standard-library versions,
// which std::uniform_int_distribution is not; all seeded behavior in this
// project (corpus generation, splits, init, dropout, shuffling) goes through
// this so that identical seeds give bit-identical artifacts.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  // Uniform in [0, bound). Rejection sampling keeps it unbiased.
  uint64_t next_below(uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::next_below: bound must be > 0");
    uint64_t threshold = (~bound + 1) % bound;  // 2^64 mod bound
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  int next_int(int bound) { return static_cast<int>(next_below(static_cast<uint64_t>(bound))); }

  // Inclusive range.
  int int_range(int lo, int hi) { return lo + next_int(hi - lo + 1); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

// Stable seed derivation for independent deterministic streams.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Shortest-round-trip style formatting for doubles in text outputs; %.17g
// round-trips exactly and is deterministic everywhere.
std::string format_double(double v);

std::vector<std::string> split_string(const std::string& s, char sep);

}  // namespace streamdf
