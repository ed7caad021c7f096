#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "bdlab/continuum.hpp"
#include "bdlab/lattice.hpp"
#include "bdlab/stats.hpp"

namespace bdlab {

enum class ModelKind { lattice, continuum };

struct ModelSpec {
  ModelKind kind = ModelKind::lattice;
  int dim = 1;
  std::string displacement = "nn";        ///< lattice: parse_displacement spec
  std::string radius_law = "fixed:0.25";  ///< continuum: parse_radius_law spec

  DisplacementFunction lattice() const;
  RadiusLaw law() const;
  /// Short label such as "lattice:nn:d1" or "continuum:fixed:0.25:d1".
  std::string label() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

enum class RunKind { forward, dual, delayed_dual, duality_check, thermo_limit, sweep };

std::string to_string(RunKind kind);
/// Accepts "forward", "dual", "delayed-dual", "duality-check", "thermo-limit", "sweep".
RunKind parse_run_kind(std::string_view text);

struct Tolerances {
  double certify_eps = 1e-9;  ///< failure probability allowed per certified height
  double height_tol = 1e-9;   ///< continuum height agreement
  double rate_rel = 0.05;     ///< relative change allowed between the last two rates
  double alpha = 0.05;        ///< trend test level

  friend bool operator==(const Tolerances&, const Tolerances&) = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ModelSpec model;
  RunKind kind = RunKind::forward;
  /// Lattice forward heights: "last_arrival" (xi) or "next_arrival" (eta).
  std::string quantity = "last_arrival";
  std::vector<double> t_grid{5.0};
  std::vector<double> u_grid{10.0};
  std::vector<int> n_grid{64};
  std::size_t replicates = 100;
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  Tolerances tol;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Canonical JSON text: fixed key order, shortest round-trip numbers.
std::string emit_config(const ExperimentConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// 16 hex digits of a mix64 fold over emit_config(config).
std::string config_hash(const ExperimentConfig& config);

/// Seed of replicate r at grid point p: derive_seed(derive_seed(master, p), r).
std::uint64_t replicate_seed(std::uint64_t master, std::size_t point, std::size_t replicate);

// ---------------------------------------------------------------------------
// Replicate kernels, each with a serial reference.

struct ReplicateHeight {
  double height = 0.0;
  bool certified = false;
  std::int32_t radius = 0;
};

/// Certified origin height of one realization: xi_t(0) or eta_t(0) on the
/// lattice, H_t(0) in the continuum.
ReplicateHeight origin_height(const ModelSpec& model, double t, std::uint64_t seed, double eps,
                              OriginQuantity q = OriginQuantity::last_arrival);

std::vector<ReplicateHeight> origin_heights(const ModelSpec& model, double t, std::uint64_t master,
                                            std::size_t point, std::size_t replicates, double eps,
                                            OriginQuantity q, int workers);
std::vector<ReplicateHeight> origin_heights_serial(const ModelSpec& model, double t,
                                                   std::uint64_t master, std::size_t point,
                                                   std::size_t replicates, double eps,
                                                   OriginQuantity q);

struct WindowWidth {
  double mean = 0.0;
  double width_sq = 0.0;
};

/// Mean height and W^2 over the centred window of side n (free boundary).
/// Continuum windows use the midpoint rule at spacing r_min / 4.
WindowWidth window_width(const ModelSpec& model, double t, int n, std::uint64_t seed);

std::vector<WindowWidth> window_widths(const ModelSpec& model, double t, int n, std::uint64_t master,
                                       std::size_t point, std::size_t replicates, int workers);
std::vector<WindowWidth> window_widths_serial(const ModelSpec& model, double t, int n,
                                              std::uint64_t master, std::size_t point,
                                              std::size_t replicates);

// ---------------------------------------------------------------------------
// Runs

struct ResultRecord {
  ExperimentConfig config;
  std::string config_hash;
  /// Data files by name (CSV text), per-replicate outputs and summaries.
  std::map<std::string, std::string> files;
  std::string summary_json;
  std::vector<Verdict> verdicts;

  bool pass() const;
};

/// Runs every replicate of the configured experiment on `workers` threads.
/// Certification failures are reported as verdicts, not exceptions.
ResultRecord run(const ExperimentConfig& config, int workers);

/// Writes config.json, the data files, summary.json and verdicts.json.
void write_record(const ResultRecord& record, const std::filesystem::path& dir);

enum class FigureKind { snapshot, width_vs_log_t, dual_trace, rate };

/// Accepts "snapshot", "width-vs-logt", "dual-trace", "rate".
FigureKind parse_figure_kind(std::string_view text);

/// Tidy CSV for an external plotter. Snapshots are (x[,y],H) profiles; the
/// other figures have one observation per row with its standard error.
/// Throws std::invalid_argument when the record lacks the needed data.
std::string emit_plot_data(const ResultRecord& record, FigureKind figure);

}  // namespace bdlab
