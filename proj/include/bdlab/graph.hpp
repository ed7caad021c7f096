#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bdlab/lattice.hpp"

namespace bdlab {

/// forward: edges (x,T) -> (y,U) for y in N_x, weight D(y - x).
/// reversed: edges (x,T) -> (y,U) for y in N*_x, weight D^(y - x) = D(x - y).
enum class Direction { forward, reversed };

struct GraphVertex {
  enum class Kind : std::uint8_t { event, substrate, top };
  Site site;
  double time;
  Kind kind;
};

/// Space-time event graph over a realization. Vertex ids: events in time order
/// first, then one substrate vertex (x, 0) and one top vertex (x, t) per
/// window site. Substrate vertices outside the window are implicit: every
/// site carries a substrate height (0 forward; 0 at the origin and -inf
/// elsewhere for the reversed graph, whose paths must start at (0, 0)).
class EventGraph {
 public:
  EventGraph(const ArrivalRealization& r, const DisplacementFunction& d, Direction dir);

  Direction direction() const noexcept { return dir_; }
  double horizon() const noexcept { return horizon_; }
  const Box& window() const noexcept { return window_; }
  const DisplacementFunction& displacement() const noexcept { return d_; }

  std::span<const GraphVertex> vertices() const noexcept { return vertices_; }
  std::size_t event_count() const noexcept { return event_count_; }
  /// Event vertex ids at s in increasing time; empty outside the window.
  std::span<const std::uint32_t> events_at(const Site& s) const noexcept;
  double substrate_height(const Site& s) const noexcept;

  /// Calls f(x, weight) for every site x with an edge x -> y.
  template <class F>
  void for_each_predecessor(const Site& y, F&& f) const {
    for (const auto& e : d_.entries()) {
      if (dir_ == Direction::forward) {
        f(y - e.offset, e.value);
      } else {
        f(y + e.offset, e.value);
      }
    }
  }

 private:
  Direction dir_;
  double horizon_;
  Box window_;
  DisplacementFunction d_;
  std::size_t event_count_ = 0;
  std::vector<GraphVertex> vertices_;
  std::vector<std::uint32_t> site_offsets_;  // CSR over window sites
  std::vector<std::uint32_t> site_events_;
};

/// Best path into a vertex. `vertex` is -1 when the path starts at the
/// substrate vertex (site, 0).
struct Predecessor {
  std::int64_t vertex = -1;
  Site site{};
};

/// Longest-path dynamic programme over the event vertices. Each event scans
/// every earlier vertex at each predecessor site, so no monotonicity of the
/// heights is assumed.
struct PathDp {
  std::vector<double> value;
  std::vector<Predecessor> pred;
};

PathDp solve_paths(const EventGraph& g);

/// sup of path heights over paths ending at (z, t) (starting at (0,0) for the
/// reversed graph); -inf when no path exists.
double max_path_height(const EventGraph& g, const PathDp& dp, const Site& z);
double max_path_height(const ArrivalRealization& r, double t, const Site& z,
                       const DisplacementFunction& d, Direction dir);

struct GraphPath {
  std::vector<GraphVertex> vertices;
  double height = kNegInf;

  std::vector<Site> skeleton() const;
};

/// Sum of edge weights along the skeleton, recomputed from scratch.
double path_height(const std::vector<Site>& skeleton, const DisplacementFunction& d, Direction dir);

/// A maximising path ending at (z, t), reconstructed from the DP.
GraphPath best_path(const EventGraph& g, const PathDp& dp, const Site& z);

/// Every path ending at (z, t). Exponential; refuses realizations with more
/// than `cap` events (std::length_error).
std::vector<GraphPath> enumerate_paths(const ArrivalRealization& r, double t, const Site& z,
                                       const DisplacementFunction& d, Direction dir,
                                       std::size_t cap = 14);

/// (z, s) -> (z, t - s), re-sorted. An involution for horizons on the time grid.
ArrivalRealization reverse_realization(const ArrivalRealization& r, double t);

struct DualityReport {
  double forward_graph = kNegInf;  ///< eta_{t-}(0) by path DP
  double forward_replay = kNegInf; ///< eta_{t-}(0) by event replay
  double dual_graph = kNegInf;     ///< sup_z dual eta on the reversed realization, path DP
  double dual_replay = kNegInf;    ///< same by dual event replay
  bool certified = true;
  bool equal = false;
  Box window;
};

DualityReport duality_check(const ArrivalRealization& r, double t, const DisplacementFunction& d);

enum class WindowChoice {
  /// The radius-R box from certified_radius.
  bound,
  /// The bounding box of the origin's light cone on the radius-R box, grown
  /// by r_max. Same origin value as the radius-R box, far fewer events.
  light_cone,
};

/// Certifies the origin value on the radius-R box (against radius 2R), builds
/// the realization on the chosen window, checks that its forward replay
/// reproduces the certified value, and runs duality_check on it.
DualityReport certified_duality_check(double t, const DisplacementFunction& d, std::uint64_t seed,
                                      double eps = 1e-9,
                                      WindowChoice choice = WindowChoice::light_cone);

/// Vertex list with DP value and chosen predecessor, for debugging.
std::string event_graph_csv(const EventGraph& g, const PathDp& dp);

}  // namespace bdlab
