// Command-line front end: one subcommand per experiment kind, plus fit and verify.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bdlab/acceptance.hpp"
#include "bdlab/csv.hpp"
#include "bdlab/experiment.hpp"
#include "bdlab/parallel.hpp"
#include "bdlab/stats.hpp"

namespace fs = std::filesystem;
using namespace bdlab;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

struct Overrides {
  std::string config_file;
  std::string out;
  std::string name;
  std::string model;
  std::optional<int> dim;
  std::string displacement;
  std::string law;
  std::string quantity;
  std::vector<double> t;
  std::vector<double> u;
  std::vector<int> n;
  std::optional<std::size_t> replicates;
  std::optional<std::uint64_t> seed;
  std::optional<double> eps;
  std::vector<std::string> plots;
  bool delayed = false;
};

void add_experiment_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_file, "JSON experiment config; flags override its values")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory (default: the config's output_dir)");
  cmd->add_option("--name", o.name, "experiment name");
  cmd->add_option("--model", o.model, "lattice or continuum")
      ->check(CLI::IsMember({"lattice", "continuum"}));
  cmd->add_option("--dim", o.dim, "substrate dimension")->check(CLI::Range(1, 3));
  cmd->add_option("--displacement", o.displacement, "lattice displacement: nn, nnn, single or x:v;x:v");
  cmd->add_option("--law", o.law, "continuum radius law: fixed:r, uniform:lo:hi, discrete:r=p,...");
  cmd->add_option("--quantity", o.quantity, "lattice origin height: last_arrival or next_arrival")
      ->check(CLI::IsMember({"last_arrival", "next_arrival"}));
  cmd->add_option("--t", o.t, "time grid")->delimiter(',');
  cmd->add_option("--u", o.u, "depth grid")->delimiter(',');
  cmd->add_option("--n", o.n, "window side grid")->delimiter(',');
  cmd->add_option("--replicates", o.replicates, "replicates per grid point");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--eps", o.eps, "certification failure probability per height");
  cmd->add_option("--plot", o.plots, "also write plot data: snapshot, width-vs-logt, dual-trace, rate")
      ->delimiter(',');
}

ExperimentConfig build_config(const Overrides& o, RunKind kind, std::optional<ModelKind> model) {
  ExperimentConfig c = o.config_file.empty() ? ExperimentConfig{} : load_config(o.config_file);
  c.kind = kind;
  if (model) c.model.kind = *model;
  if (!o.model.empty()) c.model.kind = o.model == "lattice" ? ModelKind::lattice : ModelKind::continuum;
  if (o.dim) c.model.dim = *o.dim;
  if (!o.displacement.empty()) c.model.displacement = o.displacement;
  if (!o.law.empty()) c.model.radius_law = o.law;
  if (!o.name.empty()) c.name = o.name;
  if (!o.quantity.empty()) c.quantity = o.quantity;
  if (!o.t.empty()) c.t_grid = o.t;
  if (!o.u.empty()) c.u_grid = o.u;
  if (!o.n.empty()) c.n_grid = o.n;
  if (o.replicates) c.replicates = *o.replicates;
  if (o.seed) c.master_seed = *o.seed;
  if (o.eps) c.tol.certify_eps = *o.eps;
  if (!o.out.empty()) c.output_dir = o.out;
  c.validate();
  return c;
}

int run_experiment(const Overrides& o, RunKind kind, std::optional<ModelKind> model, int workers) {
  const auto cfg = build_config(o, kind, model);
  const auto rec = run(cfg, workers);
  const fs::path dir = cfg.output_dir;
  write_record(rec, dir);
  for (const auto& p : o.plots) {
    const auto text = emit_plot_data(rec, parse_figure_kind(p));
    write_text(dir / ("plot_" + p + ".csv"), text);
  }
  std::cout << to_string(cfg.kind) << " " << cfg.model.label() << " config " << rec.config_hash
            << " -> " << dir.string() << "\n";
  for (const auto& v : rec.verdicts) {
    std::cout << "  " << (v.pass ? "PASS " : "FAIL ") << v.check << " statistic "
              << format_double(v.statistic) << " threshold " << format_double(v.threshold) << "\n";
  }
  return rec.pass() ? 0 : 1;
}

struct FitArgs {
  std::string input;
  std::string mode = "linear";
  std::string x = "t";
  std::string y = "mean";
  std::string se;
  bool require_positive = false;
};

int run_fit(const FitArgs& a) {
  std::ifstream in(a.input, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + a.input);
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto rows = parse_csv(ss.str());
  if (rows.size() < 2) throw std::invalid_argument(a.input + " has no data rows");
  auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < rows[0].size(); ++i) {
      if (rows[0][i] == name) return i;
    }
    throw std::invalid_argument("column '" + name + "' not in " + a.input);
  };
  auto fit_json = [](const FitResult& f) {
    return nlohmann::ordered_json{{"slope", f.slope},
                                  {"slope_se", f.slope_se},
                                  {"slope_ci", {f.slope_ci.lo, f.slope_ci.hi}},
                                  {"intercept", f.intercept},
                                  {"r_squared", f.r_squared},
                                  {"points", f.points}};
  };
  nlohmann::ordered_json out;
  std::optional<FitResult> checked;
  if (a.mode == "exponents") {
    const auto ct = col("t"), cn = col("n"), cw = col("width");
    std::vector<WidthRow> table;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      table.push_back({std::stod(rows[i][ct]), std::stod(rows[i][cn]), std::stod(rows[i][cw])});
    }
    const auto f = exponent_fit(table);
    out["beta"] = fit_json(f.beta);
    out["alpha"] = fit_json(f.alpha);
  } else {
    const auto cx = col(a.x), cy = col(a.y);
    const auto cs = a.se.empty() ? std::optional<std::size_t>{} : col(a.se);
    std::vector<FitPoint> pts;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      pts.push_back({std::stod(rows[i][cx]), std::stod(rows[i][cy]), cs ? std::stod(rows[i][*cs]) : 0.0});
    }
    const auto f = a.mode == "log-slope" ? log_slope_test(pts) : linear_fit(pts);
    out[a.mode] = fit_json(f);
    checked = f;
  }
  std::cout << out.dump(2) << "\n";
  if (a.require_positive) {
    if (!checked) throw std::invalid_argument("--require-positive needs the linear or log-slope mode");
    const bool pass = checked->slope_ci.lo > 0.0;
    std::cout << (pass ? "PASS" : "FAIL") << " slope CI lower bound " << format_double(checked->slope_ci.lo)
              << "\n";
    return pass ? 0 : 1;
  }
  return 0;
}

struct VerifyArgs {
  std::string out = "verify_out";
  std::string profile = "full";
  std::uint64_t seed = AcceptanceOptions{}.master_seed;
  std::vector<int> only;
};

int run_verify(const VerifyArgs& a, int workers) {
  AcceptanceOptions opt;
  opt.profile = a.profile == "quick" ? Profile::quick : Profile::full;
  opt.master_seed = a.seed;
  opt.workers = workers;
  std::vector<int> ids = a.only;
  if (ids.empty()) {
    for (int i = 1; i <= kInProcessCriteria; ++i) ids.push_back(i);
  }
  bool all = true;
  for (int id : ids) {
    const auto r = run_criterion(id, opt);
    write_criterion(r, a.out);
    std::cout << criterion_line(r) << "\n" << std::flush;
    all = all && r.pass;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ballistic deposition experiments: forward and dual simulation, duality checks, "
               "fits and the acceptance suite"};
  app.require_subcommand(1);
  std::optional<int> workers_flag;
  app.add_option("--workers", workers_flag, "worker threads (default: BDLAB_WORKERS or all cores)")
      ->check(CLI::PositiveNumber);

  Overrides lat, con, dual, check, thermo, sweep;
  auto* c_lat = app.add_subcommand("simulate-lattice", "certified origin heights of lattice BD over a t grid");
  auto* c_con = app.add_subcommand("simulate-continuum", "certified origin heights of continuum BD over a t grid");
  auto* c_dual = app.add_subcommand("dual", "dual process traces: first passage T(u) and depth D_t");
  auto* c_check = app.add_subcommand("duality-check", "per-realization forward/dual equality");
  auto* c_thermo = app.add_subcommand("thermo-limit", "finite-window W^2 over an n grid against the largest n");
  auto* c_sweep = app.add_subcommand("sweep", "W_{t,n} table over a (t, n) grid and exponent fits");
  add_experiment_options(c_lat, lat);
  add_experiment_options(c_con, con);
  add_experiment_options(c_dual, dual);
  c_dual->add_flag("--delayed", dual.delayed, "start after an Exp(1) delay (lattice)");
  add_experiment_options(c_check, check);
  add_experiment_options(c_thermo, thermo);
  add_experiment_options(c_sweep, sweep);

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "least-squares fits on a CSV table");
  c_fit->add_option("--input", fit.input, "CSV file")->required()->check(CLI::ExistingFile);
  c_fit->add_option("--mode", fit.mode, "linear, log-slope or exponents")
      ->check(CLI::IsMember({"linear", "log-slope", "exponents"}));
  c_fit->add_option("--x", fit.x, "x column");
  c_fit->add_option("--y", fit.y, "y column");
  c_fit->add_option("--se", fit.se, "standard error column of y");
  c_fit->add_flag("--require-positive", fit.require_positive, "exit 1 unless the slope CI is above 0");

  VerifyArgs verify;
  auto* c_verify = app.add_subcommand("verify", "run the acceptance suite and write its CSV data");
  c_verify->add_option("--out", verify.out, "output directory");
  c_verify->add_option("--profile", verify.profile, "full or quick")
      ->check(CLI::IsMember({"full", "quick"}));
  c_verify->add_option("--seed", verify.seed, "master seed");
  c_verify->add_option("--only", verify.only, "criterion ids")->delimiter(',')->check(CLI::Range(1, kInProcessCriteria));

  CLI11_PARSE(app, argc, argv);
  const int workers = workers_flag ? *workers_flag : worker_count();
  try {
    if (*c_lat) return run_experiment(lat, RunKind::forward, ModelKind::lattice, workers);
    if (*c_con) return run_experiment(con, RunKind::forward, ModelKind::continuum, workers);
    if (*c_dual) {
      return run_experiment(dual, dual.delayed ? RunKind::delayed_dual : RunKind::dual, std::nullopt, workers);
    }
    if (*c_check) return run_experiment(check, RunKind::duality_check, std::nullopt, workers);
    if (*c_thermo) return run_experiment(thermo, RunKind::thermo_limit, std::nullopt, workers);
    if (*c_sweep) return run_experiment(sweep, RunKind::sweep, std::nullopt, workers);
    if (*c_fit) return run_fit(fit);
    if (*c_verify) return run_verify(verify, workers);
  } catch (const std::exception& e) {
    std::cerr << "bdlab: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
