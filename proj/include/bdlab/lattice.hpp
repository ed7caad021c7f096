#pragma once

#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "bdlab/site.hpp"

namespace bdlab {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Finite neighbourhood table D: N -> R with D(0) = 1. Offsets absent from the
/// table have D = -inf.
class DisplacementFunction {
 public:
  struct Entry {
    Site offset;
    double value;
  };

  /// Validated custom table: D(0) == 1, at least two offsets, finite values,
  /// no duplicate offsets. Throws std::invalid_argument otherwise.
  static DisplacementFunction from_table(int dim, std::vector<Entry> entries);
  /// N = {z : |z|_1 <= 1}, D(0) = 1 and D = 0 on the lattice neighbours.
  static DisplacementFunction nearest_neighbour(int dim);
  /// N = {z : |z|_inf <= 1}, D = 1 everywhere on N.
  static DisplacementFunction next_nearest_neighbour(int dim);
  /// Skips the |N| >= 2 requirement. Only for the degenerate N = {0} checks
  /// where heights reduce to independent Poisson counts.
  static DisplacementFunction unchecked(int dim, std::vector<Entry> entries);

  int dim() const noexcept { return dim_; }
  std::span<const Entry> entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::optional<double> at(const Site& offset) const noexcept;
  /// D_max.
  double max_value() const noexcept { return max_value_; }
  /// r_max: largest sup-norm among offsets (at least 1 so windows stay sane).
  std::int32_t range() const noexcept { return range_; }
  /// D^(x) = D(-x).
  DisplacementFunction dual() const;
  /// d == 1 and the offsets form a contiguous integer interval.
  bool is_lattice_interval() const noexcept;
  std::string describe() const;

 private:
  DisplacementFunction(int dim, std::vector<Entry> entries);

  int dim_ = 1;
  std::vector<Entry> entries_;
  double max_value_ = 1.0;
  std::int32_t range_ = 1;
};

/// Parses "nn", "nnn" or a custom table "x:v;x:v" (coordinates comma separated)
/// into a displacement function of dimension dim. "single" is the degenerate
/// N = {0}, which tables may not express.
DisplacementFunction parse_displacement(const std::string& spec, int dim);

struct Arrival {
  Site site;
  double time;

  friend bool operator==(const Arrival&, const Arrival&) = default;
};

/// Strict (time, site) order used for every event sequence in the project.
constexpr bool arrival_before(const Arrival& a, const Arrival& b) noexcept {
  return a.time < b.time || (a.time == b.time && a.site < b.site);
}

/// Poisson arrivals on a window, sorted by (time, site).
struct ArrivalRealization {
  Box window;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  std::vector<Arrival> events;
};

/// Arrival times at one site on (0, horizon), strictly increasing. Each site
/// has its own counter-based stream keyed by (seed, site), so the arrivals at
/// a site do not depend on the window they are generated for, and the
/// sequence for a shorter horizon is a prefix of the longer one.
std::vector<double> site_arrival_times(std::uint64_t seed, const Site& site, double horizon);

ArrivalRealization generate_arrivals(const Box& window, double horizon, std::uint64_t seed);

/// Sparse map site -> height with a default for unmapped sites (0 for the
/// forward process, -inf for the dual).
class HeightField {
 public:
  explicit HeightField(int dim, double default_height = 0.0)
      : dim_(dim), default_(default_height) {}

  int dim() const noexcept { return dim_; }
  double default_height() const noexcept { return default_; }
  double at(const Site& s) const noexcept {
    auto it = values_.find(site_key(s));
    return it == values_.end() ? default_ : it->second;
  }
  void set(const Site& s, double h) { values_[site_key(s)] = h; }
  std::size_t mapped() const noexcept { return values_.size(); }

  /// Mapped sites in lexicographic order.
  std::vector<std::pair<Site, double>> sorted_entries() const;

 private:
  int dim_;
  double default_;
  absl::flat_hash_map<std::uint64_t, double> values_;
};

enum class Boundary { free, torus };

/// Dense heights on a box. Free boundary: sites outside the box read `fill`
/// and cannot be written. Torus: coordinates wrap into the box.
class BoxedField {
 public:
  BoxedField(Box window, double fill, Boundary boundary = Boundary::free);

  const Box& window() const noexcept { return window_; }
  Boundary boundary() const noexcept { return boundary_; }
  double at(const Site& s) const noexcept;
  void set(const Site& s, double h) noexcept;
  std::span<const double> values() const noexcept { return values_; }
  HeightField to_height_field() const;

 private:
  Box window_;
  double fill_;
  Boundary boundary_;
  std::vector<double> values_;
};

template <class F>
concept HeightLookup = requires(const F& f, const Site& s) {
  { f.at(s) } -> std::convertible_to<double>;
};

/// eta(x) = max over y in N*_x of field(y) + D(x - y), with -inf absorbing.
template <HeightLookup F>
double next_arrival_height(const F& field, const Site& x, const DisplacementFunction& d) {
  double best = kNegInf;
  for (const auto& e : d.entries()) {
    const double h = field.at(x - e.offset) + e.value;
    if (h > best) best = h;
  }
  return best;
}

/// field(x) <- next_arrival_height(field, x, D).
template <class F>
void apply_arrival(F& field, const Site& x, const DisplacementFunction& d) {
  field.set(x, next_arrival_height(field, x, d));
}

/// Replays the realization's events in order on a zero field.
BoxedField replay_forward(const ArrivalRealization& r, const DisplacementFunction& d,
                          Boundary boundary = Boundary::free);

/// Last-arrival heights xi_{t,Q} on the window.
HeightField simulate_forward(const Box& window, double t, const DisplacementFunction& d,
                             std::uint64_t seed, Boundary boundary = Boundary::free);

/// Replays events with the dual displacement from a seed at the origin
/// (0 at the origin, -inf elsewhere). Returns sup_z of the dual next-arrival
/// height after all events.
double replay_dual_depth(const ArrivalRealization& r, const DisplacementFunction& d);

struct InterfaceSummary {
  double mean = 0.0;
  double width_sq = 0.0;
  std::size_t site_count = 0;
};

/// Sample mean and population variance of heights over the window. Throws
/// std::domain_error if a height is -inf.
InterfaceSummary summarize(const HeightField& field, const Box& window);
InterfaceSummary summarize(const BoxedField& field);

enum class OriginQuantity {
  last_arrival,  ///< xi_t(0)
  next_arrival,  ///< eta_t(0)
};

struct LightconeResult {
  double height = 0.0;
  /// Some site outside the window became reachable; a larger window may differ.
  bool escaped = false;
  std::size_t events_processed = 0;
  std::size_t sites_touched = 0;
  /// Bounding box of the sites that became reachable inside the window.
  Box reach;
};

/// Origin height of the forward process on `window`, evaluated through the
/// time-reversed dual: only arrivals at sites the reversed cluster can reach
/// are generated and replayed, so the cost scales with the light cone of
/// (0, t) rather than the window. Exact for the window realization produced
/// by generate_arrivals(window, t, seed).
LightconeResult lightcone_origin_height(const DisplacementFunction& d, std::uint64_t seed,
                                        double t, const Box& window, OriginQuantity q);

/// Smallest y >= ceil(e^2 t) + 1 with |N|^y P[Po(t) >= y-1] < eps (Poisson
/// tail bounded above by its first term times a geometric series), times r_max.
std::int32_t certified_radius(double t, const DisplacementFunction& d, double eps);

struct CertifiedHeight {
  double height = 0.0;
  bool certified = false;
  std::int32_t radius = 0;
  /// Value on the doubled window, equal to `height` when certified.
  double doubled_height = 0.0;
  /// Sites reachable from the origin's light cone on the radius-R window.
  Box reach;
};

/// Origin height of the infinite-lattice process at time t, computed on the
/// radius-R window from certified_radius and compared against radius 2R.
CertifiedHeight origin_height_certified(double t, const DisplacementFunction& d,
                                        std::uint64_t seed, double eps = 1e-9,
                                        OriginQuantity q = OriginQuantity::last_arrival);

/// CSV rows "coordinates...,height" for the window sites.
std::string height_field_csv(const HeightField& field, const Box& window);

}  // namespace bdlab
