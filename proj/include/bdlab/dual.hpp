#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bdlab/lattice.hpp"

namespace bdlab {

/// Non-decreasing step function recorded at its jumps: from times[i] on the
/// value is values[i], until times[i + 1]. Defined on [times[0], end_time].
struct StepPath {
  std::vector<double> times;
  std::vector<double> values;
  double end_time = 0.0;

  void push(double t, double v);
  /// Value at time t (right-continuous). Requires times[0] <= t.
  double at(double t) const;
  /// inf{s : value(s) >= u}; throws std::out_of_range when never reached.
  double first_passage(double u) const;
  double final_value() const { return values.empty() ? kNegInf : values.back(); }
};

/// (u, first passage) for u = 1, 2, 4, ... up to the final value plus the
/// reachable entries of `extra`, ascending.
std::vector<std::pair<double, double>> passage_table(const StepPath& depth,
                                                     const std::vector<double>& extra);

struct DualOptions {
  double t_max = std::numeric_limits<double>::infinity();
  double u_max = std::numeric_limits<double>::infinity();
  bool delayed = false;
  /// Extra depths at which T(u) is tabulated (the powers of two up to the
  /// final depth are always included).
  std::vector<double> u_grid;
  /// Times at which (D_t, I_t) are tabulated.
  std::vector<double> t_grid;
  /// Safety stop on the number of accepted arrivals.
  std::size_t max_accepted = 50'000'000;
};

struct AcceptedArrival {
  double time;        ///< tau_j
  Site site;
  std::size_t prior;  ///< Y_{j-1}: interface size just before tau_j
};

/// Record of one dual run. The seed placement counts as accepted arrival 1
/// (at time 0, or at the kick-off time when delayed), so Y_0 = 1 and
/// N_{tau_j} = j hold for both variants.
struct DualTrace {
  int dim = 1;
  bool delayed = false;
  bool lattice_interval = false;
  double kickoff = 0.0;
  std::vector<AcceptedArrival> accepted;
  StepPath depth;      ///< D_t
  StepPath interface;  ///< I_t (1 before the kick-off)
  std::vector<std::pair<double, double>> passage;  ///< (u, T(u))
  std::vector<std::pair<double, double>> samples;  ///< (t, D_t); I_t via interface.at
  double end_time = 0.0;
};

/// Event-driven dual process from a single seed at the origin. Only active
/// sites (finite next-arrival height) are simulated: their superposed
/// arrivals form a race at rate |A| with a uniformly chosen site, and
/// arrivals elsewhere cannot change the state.
DualTrace simulate_dual(const DisplacementFunction& d, std::uint64_t seed, const DualOptions& opt);

/// T(u) for the trace.
double first_passage(const DualTrace& trace, double u);

/// M(u): number of accepted arrivals up to T(u).
std::size_t accepted_until_passage(const DualTrace& trace, double u);

struct SigmaTheta {
  double sigma_sq = 0.0;
  double theta = 0.0;
  std::size_t m = 0;
};

/// sigma_u^2 = sum_{j <= M(u)} Y_{j-1}^{-2} and theta_u = (12/e - 2) sum Y_{j-1}^{-3}.
SigmaTheta sigma_theta(const DualTrace& trace, double u);
SigmaTheta sigma_theta_from_sizes(const std::vector<std::size_t>& prior_sizes);

struct RenewalStats {
  double gamma = 0.0;  ///< slope of I_t against t over the last half of the trace
  double gamma_se = 0.0;
  /// (t, N_t / (gamma t^2 / 2))
  std::vector<std::pair<double, double>> count_ratio;
  /// (j, Y_j / sqrt(2 gamma j))
  std::vector<std::pair<double, double>> size_ratio;
  /// (u, sigma_u^2 / (gamma^-1 log u))
  std::vector<std::pair<double, double>> sigma_ratio;
};

/// Renewal diagnostics; only for d = 1 with an interval neighbourhood.
/// Throws std::invalid_argument otherwise.
RenewalStats renewal_stats(const DualTrace& trace);

/// Y_j = I_{tau_j} (j >= 1) for the trace.
double interface_after(const DualTrace& trace, std::size_t j);

/// Number of accepted arrivals up to time t.
std::size_t accepted_count(const DualTrace& trace, double t);

std::string dual_accepted_csv(const DualTrace& trace);
std::string dual_passage_csv(const DualTrace& trace);
std::string dual_samples_csv(const DualTrace& trace);

}  // namespace bdlab
