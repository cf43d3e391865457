#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace cycleground::numcore {

/// Counter-based generator: the i-th draw is a SplitMix64 finalizer applied
/// to (key + i * golden). The integer stream depends only on the seed and
/// stream key, so it is identical on every platform. split() derives an
/// independent child stream without advancing the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via the Marsaglia polar method.
  double normal();

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  Rng split(std::uint64_t key) const;

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace cycleground::numcore
