#pragma once

// Counter-based random numbers (Philox4x32-10). A draw is a pure function of
// (seed, stream, counter words), so generation order and threading never
// change results.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace micromotion {

class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  static Block generate(Block ctr, std::uint64_t key) {
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
    for (int r = 0; r < 10; ++r) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
      k0 += kW0;
      k1 += kW1;
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// Named substreams so unrelated consumers of one seed never collide.
enum class Stream : std::uint32_t {
  spikes = 1,
  background = 2,
  cells = 3,
  shot_noise = 4,
  fluorescence_noise = 5,
  glorot = 6,
  shuffle = 7,
  dropout_input = 8,
  dropout_activation = 9,
  null_band = 10,
  test = 99,
};

/// Keyed access: draw(a, b) depends only on (seed, stream, a, b).
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, Stream stream) : seed_(seed), stream_(static_cast<std::uint32_t>(stream)) {}

  Philox4x32::Block bits(std::uint64_t a, std::uint32_t b = 0) const {
    return Philox4x32::generate(
        {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), b, stream_}, seed_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform(std::uint64_t a, std::uint32_t b = 0) const {
    const auto r = bits(a, b);
    return to_unit(r[0], r[1]);
  }

  /// Standard normal via Box-Muller on one block.
  double normal(std::uint64_t a, std::uint32_t b = 0) const {
    const auto r = bits(a, b);
    const double u1 = 1.0 - to_unit(r[0], r[1]);  // (0, 1]
    const double u2 = to_unit(r[2], r[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  static double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t x = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return static_cast<double>(x) * 0x1.0p-53;
  }

 private:
  std::uint64_t seed_;
  std::uint32_t stream_;
};

/// Sequential view over a keyed stream: the n-th call returns draw(base, n).
class RngSequence {
 public:
  RngSequence(std::uint64_t seed, Stream stream, std::uint64_t base = 0)
      : rng_(seed, stream), base_(base) {}

  double uniform() { return rng_.uniform(base_, next()); }
  double normal() { return rng_.normal(base_, next()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    const auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  template <class T>
  void shuffle(std::span<T> v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::uint32_t next() { return counter_++; }

  CounterRng rng_;
  std::uint64_t base_;
  std::uint32_t counter_ = 0;
};

}  // namespace micromotion
