#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace opfbench {

/// Portable counter-seeded RNG (xoshiro256** with splitmix64 seeding).
///
/// Datasets must be reproducible bit-for-bit across platforms and worker
/// counts, so all sampling goes through this generator instead of <random>
/// distributions, whose outputs are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent substream for (seed, index), e.g. one per sample or per
  /// dimension. Streams derived from distinct indices do not overlap in
  /// practice (full 2^256 state seeded through splitmix64).
  static Rng stream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next_u64();

  /// Uniform on [0,1) with 53 random bits.
  double uniform01();

  double uniform(double lo, double hi);

  /// Unbiased integer on [0, n) via rejection.
  std::uint64_t below(std::uint64_t n);

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::array<std::uint64_t, 4> state_{};
};

}  // namespace opfbench
