#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace bdlab {

__extension__ using uint128 = unsigned __int128;

/// SplitMix64 finalizer. Used both as a hash for seed derivation and as the
/// output function of the counter-based Stream below.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stable two-argument seed derivation: derive_seed(master, replicate) is the
/// per-replicate seed; derive_seed(replicate_seed, site_key) keys a site stream.
/// The mapping is part of the output format and must not change.
constexpr std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(mix64(a) ^ (b + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

/// Stream tags keep independent uses of one replicate seed apart.
enum class StreamTag : std::uint64_t {
  lattice_site = 0x4c41545449434531ULL,
  continuum_cell = 0x434f4e54494e5531ULL,
  dual_race = 0x4455414c52414345ULL,
  permutation = 0x5045524d55544531ULL,
  continuum_race = 0x434f4e5452414345ULL,
};

/// Counter-based generator: the i-th output is mix64(key + i * golden).
/// Any number of streams can be created from a key without shared state,
/// so results never depend on thread count or scheduling.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit constexpr Stream(std::uint64_t key) noexcept : key_(key) {}
  constexpr Stream(std::uint64_t seed, StreamTag tag, std::uint64_t id) noexcept
      : key_(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(tag)), id)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    return mix64(key_ + 0x9e3779b97f4a7c15ULL * counter_++);
  }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Exponential with the given rate (mean 1/rate).
  double exponential(double rate = 1.0) noexcept { return -std::log(uniform()) / rate; }

  /// Uniform integer in [0, n) by multiply-shift; n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>((static_cast<uint128>((*this)()) * n) >> 64);
  }

  std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Arrival times live on a dyadic grid so that s -> t - s is exact for every
/// horizon on the grid (any t below 2^12 with at most 40 fractional bits).
inline constexpr double kTimeQuantum = 0x1.0p-40;

inline double quantize_time(double s) noexcept {
  const double q = std::ceil(s / kTimeQuantum) * kTimeQuantum;
  return q > 0.0 ? q : kTimeQuantum;
}

}  // namespace bdlab
