#pragma once

// Counter-based random streams built on the SplitMix64 finalizer.
//
// Stream constants (for reimplementations that must replay streams exactly):
//   golden  = 0x9E3779B97F4A7C15
//   mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//             z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31
//   draw(seed, k)    = mix64(seed + (k + 1) * golden)     (k-th output, k >= 0)
//   derive(seed, t)  = draw(seed, t)                     (child stream seed)
//   unit(x)          = (x >> 11) * 2^-53                 in [0, 1)
//   index(x, n)      = high 64 bits of the 128-bit product x * n
//   normal: Box-Muller on two consecutive draws a, b:
//           sqrt(-2 ln(1 - unit(a))) * cos(2 pi unit(b))

#include <cmath>
#include <cstdint>
#include <numbers>

namespace inflab::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t draw(std::uint64_t seed, std::uint64_t counter) noexcept {
  return mix64(seed + (counter + 1) * kGolden);
}

constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) noexcept {
  return draw(seed, tag);
}

constexpr double unit(std::uint64_t x) noexcept {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

constexpr std::uint64_t index(std::uint64_t x, std::uint64_t n) noexcept {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(x) * n) >> 64);
}

/// Sequential view of a counter-based stream.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : seed_(seed) {}

  constexpr std::uint64_t next() noexcept { return draw(seed_, counter_++); }
  constexpr double uniform() noexcept { return unit(next()); }
  constexpr std::uint64_t uniform_index(std::uint64_t n) noexcept { return index(next(), n); }

  double normal() noexcept {
    const double a = unit(next());
    const double b = unit(next());
    return std::sqrt(-2.0 * std::log(1.0 - a)) * std::cos(2.0 * std::numbers::pi * b);
  }

  bool bernoulli(double prob) noexcept { return uniform() < prob; }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t position() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// Uniform indices in [0, n): the t-th index depends only on (seed, t).
class IndexStream {
 public:
  constexpr IndexStream(std::uint64_t seed, std::uint64_t n) noexcept : seed_(seed), n_(n) {}
  constexpr std::uint64_t operator()(std::uint64_t t) const noexcept {
    return index(draw(seed_, t), n_);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t n_;
};

}  // namespace inflab::rng
