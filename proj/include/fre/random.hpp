#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace fre {

/// Seeded random source with a fully specified output sequence.
///
/// The raw stream is std::mt19937_64 seeded with the 64-bit seed, whose output
/// is fixed by the C++ standard. Everything derived from it is computed here
/// rather than through <random> distributions (whose algorithms are
/// implementation-defined), so a Python or Rust producer can reproduce the
/// same draws:
///
///   below(n):   limit = 2^64 - (2^64 mod n); draw r until r < limit; r mod n
///   uniform():  (r >> 11) * 2^-53                                   in [0, 1)
///   normal():   Box-Muller, u1 = ((r1 >> 11) + 1) * 2^-53, u2 = uniform(),
///               returns sqrt(-2 ln u1) * cos(2 pi u2) then the cached sine
///               partner on the next call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t rem = (0 - n) % n;  // 2^64 mod n
    const std::uint64_t limit = 0 - rem;    // 0 means "accept everything"
    std::uint64_t r = next();
    if (limit != 0) {
      while (r >= limit) r = next();
    }
    return r % n;
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives an independent stream seed from a base seed and a small key
/// (splitmix64 finalizer over seed ^ key-mix).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (key + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace fre
