#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace bdlab {

/// Lattice and continuum models support substrate dimensions 1..kMaxDim.
inline constexpr int kMaxDim = 3;

/// A point of Z^d. Coordinates beyond the model dimension are kept at zero,
/// so lexicographic comparison is the comparison on Z^d.
struct Site {
  std::array<std::int32_t, kMaxDim> x{};

  constexpr std::int32_t& operator[](int i) noexcept { return x[static_cast<std::size_t>(i)]; }
  constexpr std::int32_t operator[](int i) const noexcept {
    return x[static_cast<std::size_t>(i)];
  }

  friend constexpr Site operator+(Site a, const Site& b) noexcept {
    for (std::size_t i = 0; i < a.x.size(); ++i) a.x[i] += b.x[i];
    return a;
  }
  friend constexpr Site operator-(Site a, const Site& b) noexcept {
    for (std::size_t i = 0; i < a.x.size(); ++i) a.x[i] -= b.x[i];
    return a;
  }
  friend constexpr Site operator-(Site a) noexcept {
    for (auto& c : a.x) c = -c;
    return a;
  }
  friend constexpr bool operator==(const Site&, const Site&) = default;
  friend constexpr auto operator<=>(const Site&, const Site&) = default;
};

constexpr Site site1(std::int32_t a) noexcept { return Site{{a, 0, 0}}; }
constexpr Site site2(std::int32_t a, std::int32_t b) noexcept { return Site{{a, b, 0}}; }

constexpr std::int32_t norm_inf(const Site& s) noexcept {
  std::int32_t m = 0;
  for (auto c : s.x) m = c < 0 ? (-c > m ? -c : m) : (c > m ? c : m);
  return m;
}

constexpr std::int32_t norm_1(const Site& s) noexcept {
  std::int32_t m = 0;
  for (auto c : s.x) m += c < 0 ? -c : c;
  return m;
}

/// Packs a site into 64 bits (21 bits per axis, |coordinate| < 2^20).
constexpr std::uint64_t site_key(const Site& s) noexcept {
  constexpr std::uint64_t mask = (1ULL << 21) - 1;
  return ((static_cast<std::uint64_t>(s.x[0] + (1 << 20)) & mask)) |
         ((static_cast<std::uint64_t>(s.x[1] + (1 << 20)) & mask) << 21) |
         ((static_cast<std::uint64_t>(s.x[2] + (1 << 20)) & mask) << 42);
}

constexpr Site site_from_key(std::uint64_t k) noexcept {
  constexpr std::uint64_t mask = (1ULL << 21) - 1;
  return Site{{static_cast<std::int32_t>(k & mask) - (1 << 20),
               static_cast<std::int32_t>((k >> 21) & mask) - (1 << 20),
               static_cast<std::int32_t>((k >> 42) & mask) - (1 << 20)}};
}

/// "x" in d=1, "x,y" in d=2 and so on.
std::string format_site(const Site& s, int dim);

/// Axis-aligned box of sites [lo, hi] (inclusive) in Z^d. Finite windows Q and
/// the cell sets Q_n underlying continuum substrates are boxes.
class Box {
 public:
  Box() = default;
  Box(int dim, Site lo, Site hi);

  /// [-radius, radius]^d.
  static Box centered_radius(int dim, std::int32_t radius);
  /// Lattice box of side n containing the origin: [-floor((n-1)/2), ceil((n-1)/2)]^d.
  static Box centered_side(int dim, std::int32_t side);

  int dim() const noexcept { return dim_; }
  const Site& lo() const noexcept { return lo_; }
  const Site& hi() const noexcept { return hi_; }
  std::int32_t extent(int axis) const noexcept { return hi_[axis] - lo_[axis] + 1; }
  std::size_t size() const noexcept;
  bool contains(const Site& s) const noexcept {
    for (int i = 0; i < kMaxDim; ++i) {
      if (s[i] < lo_[i] || s[i] > hi_[i]) return false;
    }
    return true;
  }

  /// Row-major dense index, axis 0 fastest. Requires contains(s).
  std::size_t index(const Site& s) const noexcept {
    std::size_t idx = 0;
    for (int i = dim_ - 1; i >= 0; --i) {
      idx = idx * static_cast<std::size_t>(extent(i)) + static_cast<std::size_t>(s[i] - lo_[i]);
    }
    return idx;
  }
  Site site_at(std::size_t index) const noexcept;
  /// Grows the box by `margin` on every side along the active axes.
  Box expanded(std::int32_t margin) const;

  /// Wraps s into the box along every active axis (torus mode).
  Site wrap(const Site& s) const noexcept;

  std::vector<Site> sites() const;

  friend bool operator==(const Box&, const Box&) = default;

 private:
  int dim_ = 1;
  Site lo_{};
  Site hi_{};
};

}  // namespace bdlab

template <>
struct std::hash<bdlab::Site> {
  std::size_t operator()(const bdlab::Site& s) const noexcept {
    return static_cast<std::size_t>(bdlab::site_key(s) * 0x9e3779b97f4a7c15ULL);
  }
};
