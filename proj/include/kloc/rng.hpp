#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace kloc {

// Self-contained splitmix64 generator. The standard <random> distributions are
// implementation-defined, which would break byte-identical reports across
// toolchains, so every randomized piece of the project draws from this.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) by rejection.
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
  }

  // Box-Muller; consumes two uniforms per call, no cached state.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent stream for hypothesis/frame indices; keyed, not sequential,
  // so the draw order of one consumer cannot shift another's.
  static Rng fork(uint64_t seed, uint64_t stream) {
    Rng mix(seed ^ (0xA0761D6478BD642Full * (stream + 1)));
    mix.next_u64();
    return mix;
  }

 private:
  uint64_t state_;
};

// Distinct indices in [0, n) via Floyd's algorithm; order is draw order.
std::vector<int> sample_distinct(Rng& rng, int n, int k);

}  // namespace kloc
