#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace fewtreat {

/// SplitMix64 finalizer. A bijection on 64-bit words with good avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a stream key from a root seed and a path of counters, e.g.
/// (seed, replication, purpose). Different paths give unrelated keys.
constexpr std::uint64_t derive_key(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t key = mix64(seed);
  for (std::uint64_t word : path) key = mix64(key ^ mix64(word + 0x632be59bd9b4e019ULL));
  return key;
}

/// Counter-based generator: output n is a pure function of (key, n), so a
/// stream can be recreated anywhere without sharing state across threads.
class CounterStream {
public:
  explicit constexpr CounterStream(std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t next_u64() noexcept {
    return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Unbiased uniform integer on [0, n), n > 0 (Lemire's multiply-shift with rejection).
  std::uint64_t uniform_index(std::uint64_t n) noexcept {
    auto product = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(product);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        product = static_cast<unsigned __int128>(next_u64()) * n;
        low = static_cast<std::uint64_t>(product);
      }
    }
    return static_cast<std::uint64_t>(product >> 64);
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Student-t with integer df > 2, rescaled to unit variance.
  double scaled_t(int df) noexcept {
    const double z = normal();
    double chi2 = 0.0;
    for (int k = 0; k < df; ++k) {
      const double g = normal();
      chi2 += g * g;
    }
    const double t = z / std::sqrt(chi2 / df);
    return t * std::sqrt((df - 2.0) / df);
  }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fewtreat
