#pragma once

#include <cstdint>
#include <random>

namespace mvin {

/// splitmix64 step. Used to derive independent stream seeds from a base
/// seed plus an index (stage number, entity id, user id, ...).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t idx) {
  return splitmix64(base ^ splitmix64(idx + 0x51ed2701a9e3cc21ull));
}
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(base, a), b);
}
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                              std::uint64_t c) {
  return mix_seed(mix_seed(base, a, b), c);
}

/// Deterministic RNG. Wraps mt19937_64 (whose output sequence is pinned by
/// the standard) but maps to doubles and ranges by hand, because the
/// std::*_distribution algorithms are implementation-defined and would break
/// bit-reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1), 53-bit mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Multiply-shift; bias < 2^-64, deterministic.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace mvin
