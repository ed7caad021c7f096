#include "bdlab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "bdlab/csv.hpp"
#include "bdlab/dual.hpp"
#include "bdlab/graph.hpp"
#include "bdlab/parallel.hpp"
#include "bdlab/rng.hpp"

namespace bdlab {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Models and configs

DisplacementFunction ModelSpec::lattice() const { return parse_displacement(displacement, dim); }

RadiusLaw ModelSpec::law() const { return parse_radius_law(radius_law); }

std::string ModelSpec::label() const {
  const std::string d = ":d" + std::to_string(dim);
  return kind == ModelKind::lattice ? "lattice:" + displacement + d
                                    : "continuum:" + radius_law + d;
}

namespace {

constexpr std::pair<RunKind, const char*> kRunKinds[] = {
    {RunKind::forward, "forward"},
    {RunKind::dual, "dual"},
    {RunKind::delayed_dual, "delayed-dual"},
    {RunKind::duality_check, "duality-check"},
    {RunKind::thermo_limit, "thermo-limit"},
    {RunKind::sweep, "sweep"},
};

void reject_unknown(const Json& obj, std::initializer_list<const char*> known, const char* where) {
  if (!obj.is_object()) throw std::invalid_argument(std::string(where) + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw std::invalid_argument("unknown key '" + key + "' in " + where);
    }
  }
}

template <class T>
void read_opt(const Json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

std::string to_string(RunKind kind) {
  for (const auto& [k, name] : kRunKinds) {
    if (k == kind) return name;
  }
  return "unknown";
}

RunKind parse_run_kind(std::string_view text) {
  for (const auto& [k, name] : kRunKinds) {
    if (text == name) return k;
  }
  throw std::invalid_argument("unknown run kind '" + std::string(text) + "'");
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (model.dim < 1 || model.dim > kMaxDim) fail("model.dim must be in 1.." + std::to_string(kMaxDim));
  if (model.kind == ModelKind::lattice) {
    (void)model.lattice();
  } else {
    (void)model.law();
  }
  if (quantity != "last_arrival" && quantity != "next_arrival") {
    fail("run.quantity must be last_arrival or next_arrival");
  }
  if (t_grid.empty() || u_grid.empty() || n_grid.empty()) fail("every grid must be nonempty");
  for (double t : t_grid) {
    if (!(t > 0.0) || !std::isfinite(t)) fail("t grid values must be positive and finite");
  }
  for (double u : u_grid) {
    if (!(u > 0.0) || !std::isfinite(u)) fail("u grid values must be positive and finite");
  }
  for (int n : n_grid) {
    if (n < 1) fail("n grid values must be at least 1");
  }
  if (replicates < 1) fail("replicates must be at least 1");
  if (!(tol.certify_eps > 0.0 && tol.certify_eps < 1.0)) fail("tolerances.certify_eps must be in (0, 1)");
  if (!(tol.height_tol >= 0.0)) fail("tolerances.height_tol must be non-negative");
  if (!(tol.rate_rel > 0.0)) fail("tolerances.rate_rel must be positive");
  if (!(tol.alpha > 0.0 && tol.alpha < 1.0)) fail("tolerances.alpha must be in (0, 1)");
}

std::string emit_config(const ExperimentConfig& c) {
  Json j;
  j["name"] = c.name;
  j["model"] = {{"kind", c.model.kind == ModelKind::lattice ? "lattice" : "continuum"},
                {"dim", c.model.dim},
                {"displacement", c.model.displacement},
                {"radius_law", c.model.radius_law}};
  j["run"] = {{"kind", to_string(c.kind)},
              {"quantity", c.quantity},
              {"replicates", c.replicates},
              {"master_seed", c.master_seed},
              {"output_dir", c.output_dir}};
  j["grids"] = {{"t", c.t_grid}, {"u", c.u_grid}, {"n", c.n_grid}};
  j["tolerances"] = {{"certify_eps", c.tol.certify_eps},
                     {"height_tol", c.tol.height_tol},
                     {"rate_rel", c.tol.rate_rel},
                     {"alpha", c.tol.alpha}};
  return j.dump(2) + "\n";
}

ExperimentConfig parse_config(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    reject_unknown(j, {"name", "model", "run", "grids", "tolerances"}, "config");
    read_opt(j, "name", c.name);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      reject_unknown(m, {"kind", "dim", "displacement", "radius_law"}, "model");
      if (m.contains("kind")) {
        const auto kind = m.at("kind").get<std::string>();
        if (kind != "lattice" && kind != "continuum") {
          throw std::invalid_argument("model.kind must be lattice or continuum");
        }
        c.model.kind = kind == "lattice" ? ModelKind::lattice : ModelKind::continuum;
      }
      read_opt(m, "dim", c.model.dim);
      read_opt(m, "displacement", c.model.displacement);
      read_opt(m, "radius_law", c.model.radius_law);
    }
    if (j.contains("run")) {
      const auto& r = j.at("run");
      reject_unknown(r, {"kind", "quantity", "replicates", "master_seed", "output_dir"}, "run");
      if (r.contains("kind")) c.kind = parse_run_kind(r.at("kind").get<std::string>());
      read_opt(r, "quantity", c.quantity);
      read_opt(r, "replicates", c.replicates);
      read_opt(r, "master_seed", c.master_seed);
      read_opt(r, "output_dir", c.output_dir);
    }
    if (j.contains("grids")) {
      const auto& g = j.at("grids");
      reject_unknown(g, {"t", "u", "n"}, "grids");
      read_opt(g, "t", c.t_grid);
      read_opt(g, "u", c.u_grid);
      read_opt(g, "n", c.n_grid);
    }
    if (j.contains("tolerances")) {
      const auto& t = j.at("tolerances");
      reject_unknown(t, {"certify_eps", "height_tol", "rate_rel", "alpha"}, "tolerances");
      read_opt(t, "certify_eps", c.tol.certify_eps);
      read_opt(t, "height_tol", c.tol.height_tol);
      read_opt(t, "rate_rel", c.tol.rate_rel);
      read_opt(t, "alpha", c.tol.alpha);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config has a field of the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = emit_config(config);
  std::uint64_t h = mix64(text.size());
  for (std::size_t i = 0; i < text.size(); i += 8) {
    std::uint64_t chunk = 0;
    for (std::size_t b = 0; b < 8 && i + b < text.size(); ++b) {
      chunk |= static_cast<std::uint64_t>(static_cast<unsigned char>(text[i + b])) << (8 * b);
    }
    h = mix64(h ^ chunk);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t replicate_seed(std::uint64_t master, std::size_t point, std::size_t replicate) {
  return derive_seed(derive_seed(master, point), replicate);
}

// ---------------------------------------------------------------------------
// Kernels

namespace {

ReplicateHeight height_with(const ModelSpec& model, const DisplacementFunction* d,
                            const RadiusLaw* law, double t, std::uint64_t seed, double eps,
                            OriginQuantity q) {
  if (model.kind == ModelKind::lattice) {
    const auto c = origin_height_certified(t, *d, seed, eps, q);
    return {c.height, c.certified, c.radius};
  }
  const auto c = continuum_height_certified(t, model.dim, *law, seed, eps);
  return {c.height, c.certified, c.radius};
}

WindowWidth width_with(const ModelSpec& model, const DisplacementFunction* d, const RadiusLaw* law,
                       double t, int n, std::uint64_t seed) {
  const Box window = Box::centered_side(model.dim, n);
  if (model.kind == ModelKind::lattice) {
    const auto s = summarize(simulate_forward(window, t, *d, seed), window);
    return {s.mean, s.width_sq};
  }
  const auto agg = simulate_continuum(window, t, *law, seed);
  const auto w = mean_and_width(agg, window, law->r_max() / 4.0);
  return {w.mean, w.width_sq};
}

struct Parsed {
  std::optional<DisplacementFunction> d;
  std::optional<RadiusLaw> law;
  explicit Parsed(const ModelSpec& m) {
    if (m.kind == ModelKind::lattice) {
      d = m.lattice();
    } else {
      law = m.law();
    }
  }
  const DisplacementFunction* dp() const { return d ? &*d : nullptr; }
  const RadiusLaw* lp() const { return law ? &*law : nullptr; }
};

}  // namespace

ReplicateHeight origin_height(const ModelSpec& model, double t, std::uint64_t seed, double eps,
                              OriginQuantity q) {
  const Parsed p(model);
  return height_with(model, p.dp(), p.lp(), t, seed, eps, q);
}

std::vector<ReplicateHeight> origin_heights(const ModelSpec& model, double t, std::uint64_t master,
                                            std::size_t point, std::size_t replicates, double eps,
                                            OriginQuantity q, int workers) {
  const Parsed p(model);
  return parallel_map(replicates, workers, [&](std::size_t r) {
    return height_with(model, p.dp(), p.lp(), t, replicate_seed(master, point, r), eps, q);
  });
}

std::vector<ReplicateHeight> origin_heights_serial(const ModelSpec& model, double t,
                                                   std::uint64_t master, std::size_t point,
                                                   std::size_t replicates, double eps,
                                                   OriginQuantity q) {
  const Parsed p(model);
  return serial_map(replicates, [&](std::size_t r) {
    return height_with(model, p.dp(), p.lp(), t, replicate_seed(master, point, r), eps, q);
  });
}

WindowWidth window_width(const ModelSpec& model, double t, int n, std::uint64_t seed) {
  const Parsed p(model);
  return width_with(model, p.dp(), p.lp(), t, n, seed);
}

std::vector<WindowWidth> window_widths(const ModelSpec& model, double t, int n, std::uint64_t master,
                                       std::size_t point, std::size_t replicates, int workers) {
  const Parsed p(model);
  return parallel_map(replicates, workers, [&](std::size_t r) {
    return width_with(model, p.dp(), p.lp(), t, n, replicate_seed(master, point, r));
  });
}

std::vector<WindowWidth> window_widths_serial(const ModelSpec& model, double t, int n,
                                              std::uint64_t master, std::size_t point,
                                              std::size_t replicates) {
  const Parsed p(model);
  return serial_map(replicates, [&](std::size_t r) {
    return width_with(model, p.dp(), p.lp(), t, n, replicate_seed(master, point, r));
  });
}

// ---------------------------------------------------------------------------
// Runs

bool ResultRecord::pass() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

namespace {

Json num(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

Json fit_json(const FitResult& f) {
  return {{"slope", num(f.slope)},
          {"slope_se", num(f.slope_se)},
          {"slope_ci", {num(f.slope_ci.lo), num(f.slope_ci.hi)}},
          {"intercept", num(f.intercept)},
          {"residual_rms", num(f.residual_rms)},
          {"r_squared", num(f.r_squared)},
          {"points", f.points}};
}

std::vector<double> finite_or_throw(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::runtime_error(std::string("non-finite ") + what);
  }
  return v;
}

struct RunContext {
  const ExperimentConfig& cfg;
  int workers;
  ResultRecord& rec;
  Json& summary;
};

void run_forward(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto q = cfg.quantity == "next_arrival" ? OriginQuantity::next_arrival
                                                : OriginQuantity::last_arrival;
  CsvTable reps({"t", "replicate", "height", "certified", "radius"});
  CsvTable table({"t", "replicates", "mean", "mean_se", "variance", "variance_se", "rate",
                  "rate_se", "m4_root_over_t"});
  std::vector<std::pair<double, SampleSet>> by_t;
  std::size_t uncertified = 0, total = 0;
  for (std::size_t p = 0; p < cfg.t_grid.size(); ++p) {
    const double t = cfg.t_grid[p];
    const auto hs = origin_heights(cfg.model, t, cfg.master_seed, p, cfg.replicates,
                                   cfg.tol.certify_eps, q, ctx.workers);
    std::vector<double> values;
    for (std::size_t r = 0; r < hs.size(); ++r) {
      reps.row({cell(t), cell(r), cell(hs[r].height), cell(hs[r].certified ? 1 : 0),
                cell(hs[r].radius)});
      values.push_back(hs[r].height);
      uncertified += hs[r].certified ? 0 : 1;
      ++total;
    }
    SampleSet s(finite_or_throw(values, "height"), {cfg.model.label(), t, cfg.master_seed});
    const auto rate = ratio_estimate(s, t);
    table.row({cell(t), cell(s.size()), cell(s.mean()), cell(s.mean_se()), cell(s.variance()),
               cell(s.variance_se()), cell(rate.value), cell(rate.se),
               cell(std::pow(s.raw_moment(4), 0.25) / t)});
    by_t.emplace_back(t, std::move(s));
  }
  ctx.rec.files["heights.csv"] = reps.str();
  ctx.rec.files["summary.csv"] = table.str();

  ctx.rec.verdicts.push_back({"certified", static_cast<double>(total - uncertified) / total, 1.0,
                              uncertified == 0,
                              std::to_string(uncertified) + " of " + std::to_string(total) +
                                  " heights not certified"});
  std::sort(by_t.begin(), by_t.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  {
    const auto& [t, s] = by_t.back();
    const Estimate var{s.variance(), s.variance_se()};
    ctx.rec.verdicts.push_back({"variance_positive", var.ci95().lo, 0.0, var.ci95().lo > 0.0,
                                "95% CI lower bound of Var at t=" + format_double(t)});
    const auto rate = ratio_estimate(s, t);
    ctx.rec.verdicts.push_back({"rate_positive", rate.ci95().lo, 0.0, rate.ci95().lo > 0.0,
                                "95% CI lower bound of mean/t at t=" + format_double(t)});
  }
  if (by_t.size() >= 2) {
    const double r1 = by_t[by_t.size() - 1].second.mean() / by_t[by_t.size() - 1].first;
    const double r0 = by_t[by_t.size() - 2].second.mean() / by_t[by_t.size() - 2].first;
    const double rel = std::abs(r1 - r0) / r1;
    ctx.rec.verdicts.push_back({"rate_converged", rel, cfg.tol.rate_rel, rel < cfg.tol.rate_rel,
                                "relative change of mean/t between the two largest t"});
  }
  if (by_t.size() >= 3) {
    const auto fit = estimate_rate(by_t);
    ctx.summary["rate_fit"] = fit_json(fit);
    const auto curve = moment_diagnostic(by_t, 4, cfg.tol.alpha);
    ctx.rec.verdicts.push_back({"moment_bounded", curve.trend.p_increasing, cfg.tol.alpha,
                                curve.bounded,
                                "Mann-Kendall p for an increasing E[X^4]^(1/4)/t"});
    std::vector<FitPoint> pts;
    for (const auto& [t, s] : by_t) pts.push_back({t, s.variance(), s.variance_se()});
    const double span = std::log10(by_t.back().first / by_t.front().first);
    if (span >= 1.5) {
      const auto f = log_slope_test(pts);
      ctx.summary["log_width_fit"] = fit_json(f);
      const bool one_dim = cfg.model.dim == 1;
      ctx.rec.verdicts.push_back(
          {"log_width_growth", f.slope_ci.lo, 0.0, one_dim ? f.slope_ci.lo > 0.0 : true,
           one_dim ? "95% CI lower bound of the Var-on-log-t slope"
                   : "report only: no sign requirement for d >= 2"});
    }
  }

  // Interface snapshot of one finite window at the largest t.
  const double t = by_t.back().first;
  const int n = std::min(cfg.n_grid.front(), cfg.model.kind == ModelKind::lattice ? 4096 : 64);
  const Box window = Box::centered_side(cfg.model.dim, n);
  const std::uint64_t seed = replicate_seed(cfg.master_seed, cfg.t_grid.size(), 0);
  if (cfg.model.kind == ModelKind::lattice) {
    ctx.rec.files["profile.csv"] =
        height_field_csv(simulate_forward(window, t, cfg.model.lattice(), seed), window);
  } else {
    const auto law = cfg.model.law();
    const auto agg = simulate_continuum(window, t, law, seed);
    ctx.rec.files["profile.csv"] =
        profile_csv(agg, midpoint_grid(window, points_per_unit(law.r_max() / 4.0)));
  }
}

struct DualRow {
  std::vector<std::pair<double, double>> passage;  // (u, T(u)) on the u grid
  std::vector<std::pair<double, double>> depth;    // (t, D_t) on the t grid
  std::vector<double> interface;                   // I_t on the t grid
  std::vector<double> sigma_sq;                    // sigma_u^2 on the u grid (NaN if undefined)
  std::string renewal;                             // renewal ratios of replicate 0
};

DualRow dual_replicate(const ExperimentConfig& cfg, const DisplacementFunction* d,
                       const RadiusLaw* law, std::uint64_t seed, bool delayed, bool first) {
  const double u_max = *std::max_element(cfg.u_grid.begin(), cfg.u_grid.end());
  const double t_max = *std::max_element(cfg.t_grid.begin(), cfg.t_grid.end());
  DualRow row;
  if (cfg.model.kind == ModelKind::lattice) {
    DualOptions o;
    o.delayed = delayed;
    o.u_max = u_max;
    // The same seed replays the same race, so a longer run extends this one.
    const double reach = simulate_dual(*d, seed, o).end_time;
    o.u_max = std::numeric_limits<double>::infinity();
    o.t_max = std::max(t_max, reach);
    o.u_grid = cfg.u_grid;
    o.t_grid = cfg.t_grid;
    const auto tr = simulate_dual(*d, seed, o);
    const bool renewal = cfg.model.dim == 1 && d->is_lattice_interval();
    for (double u : cfg.u_grid) {
      row.passage.emplace_back(u, first_passage(tr, u));
      row.sigma_sq.push_back(renewal ? sigma_theta(tr, u).sigma_sq
                                     : std::numeric_limits<double>::quiet_NaN());
    }
    for (double t : cfg.t_grid) {
      row.depth.emplace_back(t, tr.depth.at(t));
      row.interface.push_back(tr.interface.at(t));
    }
    if (first && renewal) {
      try {
        const auto rs = renewal_stats(tr);
        CsvTable table({"quantity", "x", "ratio"});
        table.row({cell("gamma"), cell(0), cell(rs.gamma)});
        for (const auto& [x, r] : rs.count_ratio) table.row({cell("count"), cell(x), cell(r)});
        for (const auto& [x, r] : rs.size_ratio) table.row({cell("size"), cell(x), cell(r)});
        for (const auto& [x, r] : rs.sigma_ratio) table.row({cell("sigma"), cell(x), cell(r)});
        row.renewal = table.str();
      } catch (const std::invalid_argument&) {
        // Trace too short: no renewal table.
      }
    }
    return row;
  }
  ContinuumDualOptions o;
  o.u_max = u_max;
  const double reach = simulate_dual_continuum(cfg.model.dim, *law, seed, o).end_time;
  o.u_max = std::numeric_limits<double>::infinity();
  o.t_max = std::max(t_max, reach);
  o.u_grid = cfg.u_grid;
  o.t_grid = cfg.t_grid;
  const auto tr = simulate_dual_continuum(cfg.model.dim, *law, seed, o);
  for (double u : cfg.u_grid) {
    row.passage.emplace_back(u, first_passage(tr, u));
    row.sigma_sq.push_back(std::numeric_limits<double>::quiet_NaN());
  }
  for (double t : cfg.t_grid) {
    row.depth.emplace_back(t, tr.depth.at(t));
    row.interface.push_back(cfg.model.dim == 1 ? tr.interface.at(t)
                                               : std::numeric_limits<double>::quiet_NaN());
  }
  return row;
}

void run_dual(RunContext& ctx, bool delayed) {
  const auto& cfg = ctx.cfg;
  const Parsed parsed(cfg.model);
  const bool lattice_delay = delayed && cfg.model.kind == ModelKind::lattice;
  const auto rows = parallel_map(cfg.replicates, ctx.workers, [&](std::size_t r) {
    return dual_replicate(cfg, parsed.dp(), parsed.lp(), replicate_seed(cfg.master_seed, 0, r),
                          lattice_delay, r == 0);
  });
  CsvTable passage({"replicate", "u", "T"});
  CsvTable samples({"replicate", "t", "D", "I"});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const auto& [u, tu] : rows[r].passage) passage.row({cell(r), cell(u), cell(tu)});
    for (std::size_t k = 0; k < rows[r].depth.size(); ++k) {
      samples.row({cell(r), cell(rows[r].depth[k].first), cell(rows[r].depth[k].second),
                   cell(rows[r].interface[k])});
    }
  }
  ctx.rec.files["passage.csv"] = passage.str();
  ctx.rec.files["samples.csv"] = samples.str();
  CsvTable trace({"u", "T", "sigma_sq"});
  for (std::size_t k = 0; k < rows[0].passage.size(); ++k) {
    trace.row({cell(rows[0].passage[k].first), cell(rows[0].passage[k].second),
               cell(rows[0].sigma_sq[k])});
  }
  ctx.rec.files["dual_trace.csv"] = trace.str();
  if (!rows[0].renewal.empty()) ctx.rec.files["renewal.csv"] = rows[0].renewal;

  // Rates by both routes: u / mean T(u) and mean D_t / t.
  CsvTable rates({"route", "scale", "replicates", "mean", "mean_se", "rate", "rate_se"});
  Estimate passage_rate, depth_rate;
  for (std::size_t k = 0; k < cfg.u_grid.size(); ++k) {
    std::vector<double> v;
    for (const auto& row : rows) v.push_back(row.passage[k].second);
    const SampleSet s(v, {cfg.model.label(), cfg.u_grid[k], cfg.master_seed});
    const double u = cfg.u_grid[k];
    passage_rate = {u / s.mean(), u * s.mean_se() / (s.mean() * s.mean())};
    rates.row({cell("passage"), cell(u), cell(s.size()), cell(s.mean()), cell(s.mean_se()),
               cell(passage_rate.value), cell(passage_rate.se)});
  }
  for (std::size_t k = 0; k < cfg.t_grid.size(); ++k) {
    std::vector<double> v;
    for (const auto& row : rows) v.push_back(row.depth[k].second);
    const SampleSet s(v, {cfg.model.label(), cfg.t_grid[k], cfg.master_seed});
    depth_rate = ratio_estimate(s, cfg.t_grid[k]);
    rates.row({cell("depth"), cell(cfg.t_grid[k]), cell(s.size()), cell(s.mean()),
               cell(s.mean_se()), cell(depth_rate.value), cell(depth_rate.se)});
  }
  ctx.rec.files["dual_rates.csv"] = rates.str();
  ctx.rec.verdicts.push_back({"passage_rate_positive", passage_rate.ci95().lo, 0.0,
                              passage_rate.ci95().lo > 0.0,
                              "95% CI lower bound of u/T(u) at the last u"});
  ctx.rec.verdicts.push_back({"depth_rate_positive", depth_rate.ci95().lo, 0.0,
                              depth_rate.ci95().lo > 0.0,
                              "95% CI lower bound of D_t/t at the last t"});
  if (delayed && cfg.model.kind == ModelKind::continuum) {
    ctx.summary["note"] = "the continuum dual needs no delay; delayed-dual equals dual";
  }
}

void run_duality(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const Parsed parsed(cfg.model);
  CsvTable table({"t", "replicate", "forward", "dual", "equal", "certified"});
  std::size_t equal = 0, total = 0;
  for (std::size_t p = 0; p < cfg.t_grid.size(); ++p) {
    const double t = cfg.t_grid[p];
    struct Row {
      double forward = 0.0, dual = 0.0;
      bool equal = false, certified = false;
    };
    const auto rows = parallel_map(cfg.replicates, ctx.workers, [&](std::size_t r) {
      const auto seed = replicate_seed(cfg.master_seed, p, r);
      if (cfg.model.kind == ModelKind::lattice) {
        const auto rep = certified_duality_check(t, *parsed.d, seed, cfg.tol.certify_eps);
        return Row{rep.forward_replay, rep.dual_replay, rep.equal, rep.certified};
      }
      const auto rep = continuum_duality_check(t, cfg.model.dim, *parsed.law, seed,
                                               cfg.tol.certify_eps, cfg.tol.height_tol);
      return Row{rep.forward, rep.dual, rep.agree, rep.certified};
    });
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const bool ok = rows[r].equal && rows[r].certified;
      table.row({cell(t), cell(r), cell(rows[r].forward), cell(rows[r].dual),
                 cell(rows[r].equal ? 1 : 0), cell(rows[r].certified ? 1 : 0)});
      equal += ok ? 1 : 0;
      ++total;
    }
  }
  ctx.rec.files["duality.csv"] = table.str();
  const double frac = static_cast<double>(equal) / static_cast<double>(total);
  ctx.rec.verdicts.push_back({"per_realization_duality", frac, 1.0, equal == total,
                              std::to_string(equal) + " of " + std::to_string(total) +
                                  " certified realizations agree"});
}

std::vector<SampleSet> width_samples(RunContext& ctx, double t, std::size_t point_base,
                                     CsvTable& reps) {
  const auto& cfg = ctx.cfg;
  std::vector<SampleSet> out;
  for (std::size_t k = 0; k < cfg.n_grid.size(); ++k) {
    const int n = cfg.n_grid[k];
    const auto ws = window_widths(cfg.model, t, n, cfg.master_seed, point_base + k,
                                  cfg.replicates, ctx.workers);
    std::vector<double> v;
    for (std::size_t r = 0; r < ws.size(); ++r) {
      reps.row({cell(t), cell(n), cell(r), cell(ws[r].mean), cell(ws[r].width_sq)});
      v.push_back(ws[r].width_sq);
    }
    out.emplace_back(v, SampleMeta{cfg.model.label(), t, cfg.master_seed});
  }
  return out;
}

void run_thermo(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const double t = cfg.t_grid.front();
  CsvTable reps({"t", "n", "replicate", "mean", "width_sq"});
  const auto samples = width_samples(ctx, t, 0, reps);
  ctx.rec.files["windows.csv"] = reps.str();
  std::size_t ref = 0;
  for (std::size_t k = 1; k < cfg.n_grid.size(); ++k) {
    if (cfg.n_grid[k] > cfg.n_grid[ref]) ref = k;
  }
  CsvTable table({"n", "replicates", "width_sq", "width_sq_se", "z_vs_reference"});
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& s = samples[k];
    const auto& r = samples[ref];
    const double se = std::sqrt(s.mean_se() * s.mean_se() + r.mean_se() * r.mean_se());
    const double z = k == ref ? 0.0 : std::abs(s.mean() - r.mean()) / se;
    table.row({cell(cfg.n_grid[k]), cell(s.size()), cell(s.mean()), cell(s.mean_se()), cell(z)});
    if (k == ref) continue;
    ctx.rec.verdicts.push_back({"thermo_n" + std::to_string(cfg.n_grid[k]), z, 3.0, z <= 3.0,
                                "|W2(n) - W2(ref)| in combined standard errors, reference n=" +
                                    std::to_string(cfg.n_grid[ref])});
  }
  ctx.rec.files["thermo.csv"] = table.str();
}

void run_sweep(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  CsvTable reps({"t", "n", "replicate", "mean", "width_sq"});
  CsvTable table({"t", "n", "replicates", "width_sq", "width_sq_se", "width"});
  std::vector<WidthRow> rows;
  for (std::size_t p = 0; p < cfg.t_grid.size(); ++p) {
    const double t = cfg.t_grid[p];
    const auto samples = width_samples(ctx, t, p * cfg.n_grid.size(), reps);
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const auto& s = samples[k];
      const double w = std::sqrt(s.mean());
      table.row({cell(t), cell(cfg.n_grid[k]), cell(s.size()), cell(s.mean()), cell(s.mean_se()),
                 cell(w)});
      rows.push_back({t, static_cast<double>(cfg.n_grid[k]), w});
    }
  }
  ctx.rec.files["windows.csv"] = reps.str();
  ctx.rec.files["width_table.csv"] = table.str();
  try {
    const auto fit = exponent_fit(rows);
    ctx.summary["beta"] = fit_json(fit.beta);
    ctx.summary["alpha"] = fit_json(fit.alpha);
  } catch (const std::invalid_argument& e) {
    ctx.summary["exponents"] = std::string("not fitted: ") + e.what();
  }
}

}  // namespace

ResultRecord run(const ExperimentConfig& config, int workers) {
  config.validate();
  ResultRecord rec;
  rec.config = config;
  rec.config_hash = config_hash(config);
  Json summary;
  summary["config_hash"] = rec.config_hash;
  summary["model"] = config.model.label();
  summary["kind"] = to_string(config.kind);
  summary["replicates"] = config.replicates;
  RunContext ctx{config, workers, rec, summary};
  switch (config.kind) {
    case RunKind::forward: run_forward(ctx); break;
    case RunKind::dual: run_dual(ctx, false); break;
    case RunKind::delayed_dual: run_dual(ctx, true); break;
    case RunKind::duality_check: run_duality(ctx); break;
    case RunKind::thermo_limit: run_thermo(ctx); break;
    case RunKind::sweep: run_sweep(ctx); break;
  }
  Json verdicts = Json::array();
  for (const auto& v : rec.verdicts) {
    verdicts.push_back({{"check", v.check}, {"statistic", num(v.statistic)},
                        {"threshold", num(v.threshold)}, {"pass", v.pass}});
  }
  summary["verdicts"] = std::move(verdicts);
  summary["pass"] = rec.pass();
  rec.summary_json = summary.dump(2) + "\n";
  return rec;
}

void write_record(const ResultRecord& record, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  };
  put("config.json", emit_config(record.config));
  for (const auto& [name, text] : record.files) put(name, text);
  put("summary.json", record.summary_json);
  put("verdicts.json", verdicts_json(record.verdicts));
}

FigureKind parse_figure_kind(std::string_view text) {
  if (text == "snapshot") return FigureKind::snapshot;
  if (text == "width-vs-logt") return FigureKind::width_vs_log_t;
  if (text == "dual-trace") return FigureKind::dual_trace;
  if (text == "rate") return FigureKind::rate;
  throw std::invalid_argument("unknown figure kind '" + std::string(text) + "'");
}

namespace {

const std::string& need(const ResultRecord& rec, const std::string& name) {
  auto it = rec.files.find(name);
  if (it == rec.files.end()) {
    throw std::invalid_argument("record of kind " + to_string(rec.config.kind) + " has no " + name);
  }
  return it->second;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::invalid_argument("missing column " + name);
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

std::string emit_plot_data(const ResultRecord& rec, FigureKind figure) {
  switch (figure) {
    case FigureKind::snapshot:
      return need(rec, "profile.csv");
    case FigureKind::dual_trace:
      return need(rec, "dual_trace.csv");
    case FigureKind::width_vs_log_t: {
      const auto rows = parse_csv(need(rec, "summary.csv"));
      const auto& h = rows.front();
      const auto ct = column(h, "t"), cv = column(h, "variance"), cs = column(h, "variance_se");
      CsvTable out({"t", "log_t", "w2", "se"});
      for (std::size_t i = 1; i < rows.size(); ++i) {
        const double t = std::stod(rows[i][ct]);
        out.row({rows[i][ct], cell(std::log(t)), rows[i][cv], rows[i][cs]});
      }
      return out.str();
    }
    case FigureKind::rate: {
      CsvTable out({"route", "scale", "rate", "se"});
      if (rec.files.count("summary.csv") && rec.config.kind == RunKind::forward) {
        const auto rows = parse_csv(rec.files.at("summary.csv"));
        const auto& h = rows.front();
        const auto ct = column(h, "t"), cr = column(h, "rate"), cs = column(h, "rate_se");
        for (std::size_t i = 1; i < rows.size(); ++i) {
          out.row({cell("forward"), rows[i][ct], rows[i][cr], rows[i][cs]});
        }
        return out.str();
      }
      const auto rows = parse_csv(need(rec, "dual_rates.csv"));
      const auto& h = rows.front();
      const auto cu = column(h, "route"), cx = column(h, "scale"), cr = column(h, "rate"),
                 cs = column(h, "rate_se");
      for (std::size_t i = 1; i < rows.size(); ++i) {
        out.row({rows[i][cu], rows[i][cx], rows[i][cr], rows[i][cs]});
      }
      return out.str();
    }
  }
  throw std::invalid_argument("unknown figure kind");
}

}  // namespace bdlab
