#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <absl/container/flat_hash_map.h>

#include "bdlab/dual.hpp"
#include "bdlab/lattice.hpp"
#include "bdlab/rng.hpp"
#include "bdlab/site.hpp"

namespace bdlab {

using Point = std::array<double, kMaxDim>;

/// Distribution F of ball radii, supported on (0, r_max].
class RadiusLaw {
 public:
  static RadiusLaw fixed(double r);
  /// (radius, probability) pairs; probabilities are normalised.
  static RadiusLaw discrete(std::vector<std::pair<double, double>> table);
  static RadiusLaw uniform(double lo, double hi);

  double r_max() const noexcept { return r_max_; }
  double sample(Stream& rng) const;
  std::string describe() const;

 private:
  enum class Kind { fixed, discrete, uniform };
  Kind kind_ = Kind::fixed;
  double lo_ = 0.0;
  double r_max_ = 0.0;
  std::vector<double> radii_;
  std::vector<double> cumulative_;
};

/// "fixed:0.25", "uniform:0.1:0.3" or "discrete:0.1=1,0.25=3".
RadiusLaw parse_radius_law(const std::string& spec);

struct MarkedPoint {
  Point x{};
  double time = 0.0;
  double radius = 0.0;
};

/// Points of the unit cube `cell` + [0,1)^d with times in (0, horizon),
/// ascending. Like lattice sites, every cell has its own stream, so a cell's
/// points do not depend on the region they are generated for.
std::vector<MarkedPoint> cell_points(std::uint64_t seed, const Site& cell, int dim, double horizon,
                                     const RadiusLaw& law);

/// Marked Poisson points of unit intensity on the union of the unit cubes of
/// `cells` (the region Q~ = Q (+) [0,1)^d), sorted by time.
std::vector<MarkedPoint> generate_marked_poisson(const Box& cells, double t, const RadiusLaw& law,
                                                 std::uint64_t seed);

/// (x, T, R) -> (x, t - T, R), re-sorted.
std::vector<MarkedPoint> reverse_points(const std::vector<MarkedPoint>& pts, double t);

struct Ball {
  Point x{};
  double r = 0.0;
  double z = 0.0;  ///< centre height
  double time = 0.0;
};

enum class AggregateMode {
  forward,  ///< flat substrate at height 0 everywhere
  dual,     ///< seed point at the origin, substrate inert
};

/// Deposited balls with a uniform grid index (cell side 2 r_max) over the
/// substrate coordinates. Each grid cell keeps its balls sorted by centre
/// height so searches can stop once lower balls cannot matter.
class Agglomeration {
 public:
  Agglomeration(int dim, double r_max, AggregateMode mode);

  int dim() const noexcept { return dim_; }
  AggregateMode mode() const noexcept { return mode_; }
  const std::vector<Ball>& balls() const noexcept { return balls_; }

  /// Stopping height of a ball of radius r dropped above x; nullopt when it
  /// touches nothing (only possible in dual mode).
  std::optional<double> contact_height(const Point& x, double r) const;
  /// Same, scanning every deposited ball.
  std::optional<double> contact_height_bruteforce(const Point& x, double r) const;

  /// Deposits the ball if it sticks; returns its index.
  std::optional<std::size_t> drop(const MarkedPoint& p);

  /// Interface height above x: max over covering balls of z + sqrt(r^2 - d^2);
  /// if none, 0 (forward) or -inf (dual, except 0 at the seed).
  double height_at(const Point& x) const;
  double height_at_bruteforce(const Point& x) const;

  /// sup_x of the height: max(0, max z + r).
  double depth() const noexcept { return depth_; }

 private:
  std::uint64_t grid_key(const Point& x) const noexcept;
  template <class F>
  void for_neighbour_cells(const Point& x, F&& f) const;

  int dim_;
  double r_max_;
  double side_;
  AggregateMode mode_;
  std::vector<Ball> balls_;
  absl::flat_hash_map<std::uint64_t, std::vector<std::uint32_t>> grid_;
  double depth_ = 0.0;
};

/// Forward BD driven by the points of the cells with times below t.
Agglomeration simulate_continuum(const Box& cells, double t, const RadiusLaw& law,
                                 std::uint64_t seed);
Agglomeration deposit_all(const std::vector<MarkedPoint>& pts, int dim, double r_max,
                          AggregateMode mode);

/// Midpoint-rule grid over the union of the unit cubes of `cells` with m
/// points per unit length; returns the grid points in index order.
std::vector<Point> midpoint_grid(const Box& cells, int per_unit);

/// Points per unit length for spacing at most h.
int points_per_unit(double h);

struct WidthEstimate {
  double mean = 0.0;
  double width_sq = 0.0;
  double h = 0.0;
  double mean_half = 0.0;  ///< at spacing h/2
  double width_sq_half = 0.0;
};

/// H-bar and V^2 over the region of `cells` by the midpoint rule at spacing h
/// (rounded down to divide 1), plus the same at h/2.
WidthEstimate mean_and_width(const Agglomeration& agg, const Box& cells, double h);

struct ContinuumPath {
  std::vector<std::size_t> points;  ///< indices into the point list, increasing time
  double height = 0.0;              ///< height at x of the path's own BD
};

/// Forward BD of just the given points (in order) on a flat substrate,
/// evaluated above x.
double path_height_at(const std::vector<MarkedPoint>& pts, const std::vector<std::size_t>& idx,
                      const Point& x, int dim);

/// Every path in the point set (times below t) that ends near x. Exponential;
/// refuses more than `cap` points (std::length_error).
std::vector<ContinuumPath> enumerate_continuum_paths(const std::vector<MarkedPoint>& pts, double t,
                                                     const Point& x, int dim, std::size_t cap = 12);

/// Max height over enumerated paths, 0 if there is none.
double max_continuum_path_height(const std::vector<MarkedPoint>& pts, double t, const Point& x,
                                 int dim, std::size_t cap = 12);

struct ContinuumDualOptions {
  double t_max = std::numeric_limits<double>::infinity();
  double u_max = std::numeric_limits<double>::infinity();
  std::vector<double> u_grid;
  std::vector<double> t_grid;
  std::size_t max_proposals = 500'000'000;
};

struct ContinuumAccepted {
  double time;
  Point x;
  double radius;
  double prior;  ///< interface measure just before (NaN for d >= 2)
};

struct ContinuumSample {
  double t;
  double depth;      ///< D~_t
  double interface;  ///< I_t (NaN for d >= 2)
};

struct ContinuumDualTrace {
  int dim = 1;
  std::vector<ContinuumAccepted> accepted;
  StepPath depth;      ///< D~_t
  StepPath interface;  ///< Lebesgue measure of the interface (d = 1 only)
  std::vector<std::pair<double, double>> passage;  ///< (u, T~(u))
  std::vector<ContinuumSample> samples;
  std::size_t proposals = 0;
  double end_time = 0.0;
};

/// Dual continuum BD from a seed point at the origin. Proposals come from unit
/// cells meeting the footprint dilated by r_max; each such cell runs its own
/// unit-rate Poisson clock, so the proposal process is unit intensity on a
/// superset of the positions that can stick. Balls that miss are discarded.
ContinuumDualTrace simulate_dual_continuum(int dim, const RadiusLaw& law, std::uint64_t seed,
                                           const ContinuumDualOptions& opt);

double first_passage(const ContinuumDualTrace& trace, double u);

std::string continuum_accepted_csv(const ContinuumDualTrace& trace);
std::string continuum_passage_csv(const ContinuumDualTrace& trace);
std::string continuum_samples_csv(const ContinuumDualTrace& trace);

struct ContinuumConeResult {
  double height = 0.0;
  bool escaped = false;
  std::size_t events_processed = 0;
  std::size_t balls = 0;
  std::size_t cells_touched = 0;
};

/// H_{t,n}(0) for the realization generate_marked_poisson(cells, t, law,
/// seed), evaluated as the dual depth of the time-reversed points, with cells
/// generated lazily as the reversed cluster reaches them.
ContinuumConeResult continuum_lightcone_height(int dim, const RadiusLaw& law, std::uint64_t seed,
                                               double t, const Box& cells);

/// Cell radius R such that the expected number of overlapping time-ordered
/// chains ending near the origin that reach outside [-R, R+1)^d is below eps.
std::int32_t continuum_certified_radius(double t, int dim, double r_max, double eps);

struct ContinuumCertified {
  double height = 0.0;
  bool certified = false;
  std::int32_t radius = 0;
  double doubled_height = 0.0;
};

/// H_t(0) on the infinite substrate: light-cone evaluation on the radius-R
/// cell box, confirmed on radius 2R when the cone reached the boundary.
ContinuumCertified continuum_height_certified(double t, int dim, const RadiusLaw& law,
                                              std::uint64_t seed, double eps = 1e-9);

struct ContinuumDualityReport {
  double forward = 0.0;     ///< H_{t,n}(0) by the forward engine
  double dual = 0.0;        ///< dual depth of the reversed points, explicit replay
  double lightcone = 0.0;   ///< same through the lazy light-cone evaluator
  bool certified = false;
  bool agree = false;       ///< all three within tol
};

ContinuumDualityReport continuum_duality_check(double t, int dim, const RadiusLaw& law,
                                               std::uint64_t seed, double eps = 1e-9,
                                               double tol = 1e-9);

struct CouplingReport {
  std::size_t grid_points = 0;
  std::size_t violations = 0;
  double max_excess = -std::numeric_limits<double>::infinity();  ///< max of H(x) - eta(z(x))
};

/// Drives NNN lattice BD with the cube-projected arrival times of the same
/// points and compares H_t(x) with eta_t(z(x)) on the midpoint grid.
CouplingReport lattice_coupling(const Box& cells, double t, const RadiusLaw& law,
                                std::uint64_t seed, int per_unit);

std::string agglomeration_csv(const Agglomeration& agg);
std::string profile_csv(const Agglomeration& agg, const std::vector<Point>& grid);

}  // namespace bdlab
