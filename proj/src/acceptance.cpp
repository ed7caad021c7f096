#include "bdlab/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <boost/math/distributions/poisson.hpp>

#include "bdlab/continuum.hpp"
#include "bdlab/csv.hpp"
#include "bdlab/dual.hpp"
#include "bdlab/experiment.hpp"
#include "bdlab/graph.hpp"
#include "bdlab/parallel.hpp"
#include "bdlab/rng.hpp"

namespace bdlab {

namespace {

struct Ctx {
  const AcceptanceOptions& opt;
  int id;
  CriterionResult& out;

  bool full() const { return opt.profile == Profile::full; }
  std::size_t size(std::size_t full_n, std::size_t quick_n) const { return full() ? full_n : quick_n; }
  std::uint64_t seed(std::uint64_t k) const {
    return derive_seed(derive_seed(opt.master_seed, static_cast<std::uint64_t>(id)), k);
  }
  void verdict(std::string check, double statistic, double threshold, bool pass, std::string detail) {
    out.verdicts.push_back({std::move(check), statistic, threshold, pass, std::move(detail)});
  }
};

ModelSpec lattice_model(const char* displacement, int dim) {
  return {ModelKind::lattice, dim, displacement, "fixed:0.25"};
}

ModelSpec continuum_model(int dim, const char* law = "fixed:0.25") {
  return {ModelKind::continuum, dim, "nn", law};
}

std::string slug(const ModelSpec& m) {
  std::string s = m.label();
  for (char& c : s) {
    if (c == ':' || c == '=' || c == ',') c = '_';
  }
  return s;
}

/// Runs a harness experiment and keeps the named verdicts, prefixed by model.
ResultRecord harness(Ctx& c, ExperimentConfig cfg, std::initializer_list<const char*> keep) {
  const auto rec = run(cfg, c.opt.workers);
  for (const auto& v : rec.verdicts) {
    if (std::any_of(keep.begin(), keep.end(), [&](const char* k) { return v.check == k; })) {
      c.verdict(cfg.model.label() + " " + v.check, v.statistic, v.threshold, v.pass, v.detail);
    }
  }
  for (const auto& [name, text] : rec.files) c.out.files[slug(cfg.model) + "_" + name] = text;
  return rec;
}

ExperimentConfig base_config(Ctx& c, const ModelSpec& model, RunKind kind, std::uint64_t k) {
  ExperimentConfig cfg;
  cfg.name = "criterion" + std::to_string(c.id);
  cfg.model = model;
  cfg.kind = kind;
  cfg.master_seed = c.seed(k);
  return cfg;
}

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// 1. Path DP on the event graph equals event replay at every window site.
void graph_soundness(Ctx& c) {
  const std::size_t n = c.size(200, 40);
  CsvTable table({"instance", "dim", "displacement", "events", "sites", "mismatches"});
  std::size_t bad = 0, sites = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int dim = 1 + static_cast<int>(i % 2);
    const char* name = (i / 2) % 2 == 0 ? "nn" : "nnn";
    const auto d = parse_displacement(name, dim);
    const Box window = dim == 1 ? Box::centered_side(1, 5) : Box::centered_side(2, 3);
    const double t = dim == 1 ? 1.6 : 1.0;
    ArrivalRealization r;
    for (std::uint64_t k = 0;; ++k) {
      r = generate_arrivals(window, t, derive_seed(c.seed(i), k));
      if (r.events.size() <= 12) break;
    }
    const EventGraph g(r, d, Direction::forward);
    const auto dp = solve_paths(g);
    const auto field = replay_forward(r, d);
    std::size_t mismatches = 0;
    for (const auto& z : window.sites()) {
      mismatches += max_path_height(g, dp, z) == next_arrival_height(field, z, d) ? 0 : 1;
      ++sites;
    }
    bad += mismatches;
    table.row({cell(i), cell(dim), cell(name), cell(r.events.size()), cell(window.size()),
               cell(mismatches)});
  }
  c.out.files["instances.csv"] = table.str();
  c.verdict("dp_equals_replay", static_cast<double>(bad), 0.0, bad == 0,
            std::to_string(bad) + " mismatched sites of " + std::to_string(sites));
  c.out.summary = std::to_string(n) + " realizations, " + std::to_string(sites) +
                  " window sites, " + std::to_string(bad) + " mismatches";
}

// 2. Per-realization duality for the eta form.
void duality_per_realization(Ctx& c) {
  const std::size_t n = c.size(1000, 30);
  std::string summary;
  std::uint64_t k = 0;
  for (auto [name, dim] : {std::pair{"nn", 1}, std::pair{"nnn", 1}, std::pair{"nnn", 2}}) {
    auto cfg = base_config(c, lattice_model(name, dim), RunKind::duality_check, k++);
    cfg.t_grid = {5.0};
    cfg.replicates = n;
    harness(c, cfg, {"per_realization_duality"});
    summary += (summary.empty() ? "" : "; ") + cfg.model.label() + " " +
               fixed3(c.out.verdicts.back().statistic * 100.0) + "% equal";
  }
  c.out.summary = std::to_string(n) + " certified realizations each at t=5: " + summary;
}

// 3. Forward xi_t(0) and delayed-dual depth agree in law; same for the continuum.
void duality_in_law(Ctx& c) {
  const std::size_t n = c.size(5000, 200);
  const double t = 5.0;
  std::string summary;
  {
    const auto model = lattice_model("nn", 1);
    const auto d = model.lattice();
    const auto fwd = origin_heights(model, t, c.seed(0), 0, n, 1e-9, OriginQuantity::last_arrival,
                                    c.opt.workers);
    const auto dual = parallel_map(n, c.opt.workers, [&](std::size_t r) {
      DualOptions o;
      o.t_max = t;
      o.delayed = true;
      return simulate_dual(d, replicate_seed(c.seed(1), 0, r), o).depth.at(t);
    });
    std::vector<double> a;
    CsvTable table({"replicate", "forward_xi", "delayed_dual_depth"});
    for (std::size_t r = 0; r < n; ++r) {
      a.push_back(fwd[r].height);
      table.row({cell(r), cell(fwd[r].height), cell(dual[r])});
    }
    c.out.files["lattice_nn_d1.csv"] = table.str();
    const auto ks = ks_two_sample(SampleSet(a), SampleSet(dual), c.seed(2));
    c.verdict("lattice:nn:d1 ks_xi_vs_delayed_dual", ks.p_value, 0.01, ks.p_value > 0.01,
              "KS p-value, D=" + format_double(ks.statistic));
    summary = "lattice KS p=" + fixed3(ks.p_value);
  }
  {
    const auto model = continuum_model(1);
    const auto law = model.law();
    const auto fwd = origin_heights(model, t, c.seed(3), 0, n, 1e-9, OriginQuantity::last_arrival,
                                    c.opt.workers);
    const auto dual = parallel_map(n, c.opt.workers, [&](std::size_t r) {
      ContinuumDualOptions o;
      o.t_max = t;
      return simulate_dual_continuum(1, law, replicate_seed(c.seed(4), 0, r), o).depth.at(t);
    });
    std::vector<double> a;
    CsvTable table({"replicate", "forward_H", "dual_depth"});
    for (std::size_t r = 0; r < n; ++r) {
      a.push_back(fwd[r].height);
      table.row({cell(r), cell(fwd[r].height), cell(dual[r])});
    }
    c.out.files["continuum_fixed_0.25_d1.csv"] = table.str();
    const auto ks = ks_two_sample(SampleSet(a), SampleSet(dual), c.seed(5));
    c.verdict("continuum:fixed:0.25:d1 ks_H_vs_dual", ks.p_value, 0.01, ks.p_value > 0.01,
              "KS p-value, D=" + format_double(ks.statistic));
    summary += ", continuum KS p=" + fixed3(ks.p_value);
  }
  c.out.summary = std::to_string(n) + " samples per side at t=5: " + summary;
}

// 4. With N = {0} heights are Poisson counts and the window width averages t.
void degenerate_exactness(Ctx& c) {
  const double t = 3.0;
  const std::size_t n = c.size(10'000, 500);
  const auto model = lattice_model("single", 1);
  const auto hs = origin_heights(model, t, c.seed(0), 0, n, 1e-9, OriginQuantity::last_arrival,
                                 c.opt.workers);
  std::vector<double> v;
  for (const auto& h : hs) v.push_back(h.height);
  const boost::math::poisson_distribution<double> po(t);
  const auto ks = ks_one_sample(SampleSet(v), [&](double x) {
    return x < 0.0 ? 0.0 : boost::math::cdf(po, std::floor(x));
  });
  c.verdict("ks_vs_poisson", ks.p_value, 0.01, ks.p_value > 0.01,
            "one-sample KS p-value against Poisson(3), D=" + format_double(ks.statistic));

  const int side = 1024;
  const std::size_t reps = c.size(200, 20);
  const auto ws = window_widths(model, t, side, c.seed(1), 0, reps, c.opt.workers);
  CsvTable table({"replicate", "mean", "width_sq"});
  std::vector<double> w2;
  for (std::size_t r = 0; r < ws.size(); ++r) {
    table.row({cell(r), cell(ws[r].mean), cell(ws[r].width_sq)});
    w2.push_back(ws[r].width_sq);
  }
  CsvTable heights({"replicate", "xi"});
  for (std::size_t r = 0; r < v.size(); ++r) heights.row({cell(r), cell(v[r])});
  c.out.files["heights.csv"] = heights.str();
  c.out.files["windows.csv"] = table.str();
  const SampleSet s(w2);
  const double z = std::abs(s.mean() - t) / s.mean_se();
  c.verdict("window_width_mean", z, 3.0, z <= 3.0,
            "|mean W2 - t| in standard errors, mean W2=" + format_double(s.mean()));
  c.out.summary = "KS p=" + fixed3(ks.p_value) + ", mean W2=" + fixed3(s.mean()) + " (" +
                  fixed3(z) + " SE from t=3)";
}

// 5. Linear growth: mean/t settles and stays away from 0.
void linear_growth(Ctx& c) {
  std::string summary;
  std::uint64_t k = 0;
  for (const auto& model : {lattice_model("nn", 1), continuum_model(1)}) {
    auto cfg = base_config(c, model, RunKind::forward, k++);
    cfg.t_grid = {25.0, 50.0, 100.0};
    cfg.replicates = c.size(2000, 60);
    const auto rec = harness(c, cfg, {"certified", "rate_positive", "rate_converged"});
    const auto rows = parse_csv(rec.files.at("summary.csv"));
    summary += (summary.empty() ? "" : "; ") + model.label() + " rate(100)=" +
               fixed3(std::stod(rows.back()[6])) + " rel change " +
               fixed3(c.out.verdicts.back().statistic);
  }
  c.out.summary = summary;
}

struct PassageRate {
  double mean_t = 0.0;
  Estimate rate;
};

PassageRate read_rate(const ResultRecord& rec, const char* route) {
  const auto rows = parse_csv(rec.files.at("dual_rates.csv"));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][0] == route) {
      return {std::stod(rows[i][3]), {std::stod(rows[i][5]), std::stod(rows[i][6])}};
    }
  }
  throw std::runtime_error("missing rate route");
}

// 6. u / T(u) and D_t / t estimate the same rate.
void rate_reciprocity(Ctx& c) {
  std::string summary;
  std::uint64_t k = 0;
  for (const auto& model : {lattice_model("nn", 1), continuum_model(1)}) {
    auto cfg = base_config(c, model, RunKind::dual, k++);
    cfg.replicates = c.size(500, 40);
    cfg.u_grid = {200.0};
    cfg.t_grid = {1.0};
    const auto first = run(cfg, c.opt.workers);
    const auto passage = read_rate(first, "passage");
    cfg.master_seed = c.seed(k++);
    cfg.t_grid = {passage.mean_t};
    const auto second = run(cfg, c.opt.workers);
    const auto depth = read_rate(second, "depth");
    c.out.files[slug(model) + "_passage_rates.csv"] = first.files.at("dual_rates.csv");
    c.out.files[slug(model) + "_depth_rates.csv"] = second.files.at("dual_rates.csv");
    const double rel = std::abs(passage.rate.value - depth.rate.value) / passage.rate.value;
    const bool overlap = passage.rate.ci95().overlaps(depth.rate.ci95());
    c.verdict(model.label() + " rates_agree", rel, 0.05, rel < 0.05 && overlap,
              "relative gap between u/T(u) at u=200 and D_t/t at t=" +
                  format_double(passage.mean_t) + (overlap ? ", CIs overlap" : ", CIs disjoint"));
    summary += (summary.empty() ? "" : "; ") + model.label() + " u/T=" +
               fixed3(passage.rate.value) + " D/t=" + fixed3(depth.rate.value);
  }
  c.out.summary = summary;
}

// 7. Var of the origin height grows at least like log t in d = 1.
void log_width_growth(Ctx& c) {
  std::string summary;
  std::uint64_t k = 0;
  for (const auto& model : {lattice_model("nn", 1), continuum_model(1)}) {
    auto cfg = base_config(c, model, RunKind::forward, k++);
    cfg.t_grid = c.full() ? std::vector<double>{8, 16, 32, 64, 128, 256, 512}
                          : std::vector<double>{4, 8, 16, 32, 64, 128};
    cfg.replicates = c.size(2000, 60);
    harness(c, cfg, {"certified", "log_width_growth"});
    summary += (summary.empty() ? "" : "; ") + model.label() + " slope CI lower bound " +
               fixed3(c.out.verdicts.back().statistic);
  }
  c.out.summary = summary;
}

// 8. Var of the origin height is positive in d = 2.
void positive_variance(Ctx& c) {
  auto cfg = base_config(c, lattice_model("nnn", 2), RunKind::forward, 0);
  cfg.t_grid = {c.full() ? 100.0 : 10.0};
  cfg.replicates = c.size(20, 10);
  const auto rec = harness(c, cfg, {"certified", "variance_positive"});
  const auto rows = parse_csv(rec.files.at("summary.csv"));
  c.out.summary = std::to_string(cfg.replicates) + " certified replicates at t=" +
                  format_double(cfg.t_grid[0]) + ": Var=" + fixed3(std::stod(rows[1][4])) +
                  " +- " + fixed3(std::stod(rows[1][5]));
}

// 9. Renewal structure of the d = 1 NN dual.
void renewal_structure(Ctx& c) {
  const auto d = DisplacementFunction::nearest_neighbour(1);
  const double u_max = c.full() ? 1000.0 : 300.0;
  const double j_check = c.full() ? 1e4 : 1e3;
  DualOptions o;
  o.u_max = u_max;
  const auto trace = simulate_dual(d, c.seed(0), o);
  const auto rs = renewal_stats(trace);
  CsvTable table({"quantity", "x", "ratio"});
  table.row({cell("gamma"), cell(0), cell(rs.gamma)});
  for (const auto& [x, r] : rs.count_ratio) table.row({cell("count"), cell(x), cell(r)});
  for (const auto& [x, r] : rs.size_ratio) table.row({cell("size"), cell(x), cell(r)});
  for (const auto& [x, r] : rs.sigma_ratio) table.row({cell("sigma"), cell(x), cell(r)});
  c.out.files["long_trace.csv"] = table.str();

  const double g_lo = rs.gamma - z95() * rs.gamma_se;
  c.verdict("gamma_positive", g_lo, 0.0, g_lo > 0.0, "95% CI lower bound of the I_t slope");
  const double count = rs.count_ratio.back().second;
  c.verdict("count_ratio_at_end", count, 0.1, std::abs(count - 1.0) <= 0.1,
            "N_t / (gamma t^2 / 2) at t=" + format_double(rs.count_ratio.back().first));
  double size = std::numeric_limits<double>::quiet_NaN();
  for (const auto& [j, r] : rs.size_ratio) {
    if (j == j_check) size = r;
  }
  c.verdict("size_ratio", size, 0.1, std::abs(size - 1.0) <= 0.1,
            "Y_j / sqrt(2 gamma j) at j=" + format_double(j_check));

  const std::size_t traces = c.size(100, 10);
  const auto sig = parallel_map(traces, c.opt.workers, [&](std::size_t r) {
    DualOptions oo;
    oo.u_max = u_max;
    return sigma_theta(simulate_dual(d, replicate_seed(c.seed(1), 0, r), oo), u_max).sigma_sq;
  });
  CsvTable st({"trace", "u", "sigma_sq"});
  for (std::size_t r = 0; r < sig.size(); ++r) st.row({cell(r), cell(u_max), cell(sig[r])});
  c.out.files["sigma.csv"] = st.str();
  const SampleSet s(sig);
  const double ratio = s.mean() * rs.gamma / std::log(u_max);
  c.verdict("sigma_ratio", ratio, 0.15, std::abs(ratio - 1.0) <= 0.15,
            "mean sigma_u^2 over " + std::to_string(traces) + " traces / (log u / gamma) at u=" +
                format_double(u_max));
  c.out.summary = "gamma=" + fixed3(rs.gamma) + ", count " + fixed3(count) + ", size " +
                  fixed3(size) + ", sigma " + fixed3(ratio);
}

// 10. E[eta_t(0)^4]^(1/4) / t has no increasing trend.
void moment_boundedness(Ctx& c) {
  auto cfg = base_config(c, lattice_model("nn", 1), RunKind::forward, 0);
  cfg.quantity = "next_arrival";
  cfg.t_grid = {10.0, 20.0, 40.0, 80.0};
  cfg.replicates = c.size(2000, 60);
  const auto rec = harness(c, cfg, {"certified", "moment_bounded"});
  const auto rows = parse_csv(rec.files.at("summary.csv"));
  std::string curve;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    curve += (i > 1 ? ", " : "") + fixed3(std::stod(rows[i][8]));
  }
  c.out.summary = "E[eta^4]^(1/4)/t at t=10,20,40,80: " + curve + "; MK p=" +
                  fixed3(c.out.verdicts.back().statistic);
}

// 11. Finite-window W^2 approaches its large-window value.
void thermodynamic_limit(Ctx& c) {
  auto cfg = base_config(c, lattice_model("nn", 1), RunKind::thermo_limit, 0);
  cfg.t_grid = {10.0};
  cfg.n_grid = {64, 256, 1024, 4096};
  cfg.replicates = c.size(1000, 40);
  const auto rec = harness(c, cfg, {"thermo_n64", "thermo_n256", "thermo_n1024"});
  std::string s;
  for (const auto& v : c.out.verdicts) s += (s.empty() ? "" : ", ") + v.check.substr(v.check.find(' ') + 1) + " z=" + fixed3(v.statistic);
  c.out.summary = s;
}

// 12. Continuum heights sit below the coupled NNN lattice heights.
void coupling(Ctx& c) {
  const std::size_t n = c.size(500, 20);
  const auto law = RadiusLaw::fixed(0.25);
  CsvTable table({"dim", "realization", "grid_points", "violations", "max_excess"});
  std::string summary;
  for (int dim = 1; dim <= 2; ++dim) {
    const Box cells = Box::centered_radius(dim, dim == 1 ? 10 : 3);
    const auto reps = parallel_map(n, c.opt.workers, [&](std::size_t r) {
      return lattice_coupling(cells, 5.0, law, replicate_seed(c.seed(dim), 0, r), 8);
    });
    std::size_t viol = 0, points = 0;
    double excess = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < n; ++r) {
      table.row({cell(dim), cell(r), cell(reps[r].grid_points), cell(reps[r].violations),
                 cell(reps[r].max_excess)});
      viol += reps[r].violations;
      points += reps[r].grid_points;
      excess = std::max(excess, reps[r].max_excess);
    }
    c.verdict("d" + std::to_string(dim) + " coupling_violations", static_cast<double>(viol), 0.0,
              viol == 0,
              std::to_string(points) + " grid points, max H - eta = " + format_double(excess));
    summary += (summary.empty() ? "" : "; ") + std::string("d=") + std::to_string(dim) + ": " +
               std::to_string(viol) + " violations on " + std::to_string(points) + " points";
  }
  c.out.files["coupling.csv"] = table.str();
  c.out.summary = std::to_string(n) + " realizations per dimension at t=5, " + summary;
}

// 13. Engine heights equal the best enumerated path.
void continuum_oracle(Ctx& c) {
  const std::size_t n = c.size(200, 40);
  CsvTable table({"instance", "dim", "law", "points", "queries", "max_abs_diff"});
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int dim = 1 + static_cast<int>(i % 2);
    const auto law = i % 3 == 0 ? RadiusLaw::fixed(0.3) : RadiusLaw::uniform(0.15, 0.6);
    const Box cells = dim == 1 ? Box::centered_side(1, 2) : Box(2, Site{}, Site{});
    const double t = dim == 1 ? 2.5 : 5.0;
    std::vector<MarkedPoint> pts;
    for (std::uint64_t k = 0;; ++k) {
      pts = generate_marked_poisson(cells, t, law, derive_seed(c.seed(i), k));
      if (pts.size() <= 12) break;
    }
    const auto agg = deposit_all(pts, dim, law.r_max(), AggregateMode::forward);
    auto xs = midpoint_grid(cells, dim == 1 ? 16 : 4);
    for (const auto& p : pts) xs.push_back(p.x);
    double diff = 0.0;
    for (const auto& x : xs) {
      diff = std::max(diff, std::abs(agg.height_at(x) - max_continuum_path_height(pts, t, x, dim)));
    }
    worst = std::max(worst, diff);
    table.row({cell(i), cell(dim), cell(law.describe()), cell(pts.size()), cell(xs.size()),
               cell(diff)});
  }
  c.out.files["instances.csv"] = table.str();
  c.verdict("engine_equals_paths", worst, 1e-9, worst <= 1e-9, "max |engine - best path|");
  c.out.summary = std::to_string(n) + " instances, max difference " + format_double(worst);
}

struct Entry {
  const char* name;
  void (*fn)(Ctx&);
};

constexpr Entry kCriteria[] = {
    {"graph-representation soundness", graph_soundness},
    {"per-realization duality", duality_per_realization},
    {"distributional duality", duality_in_law},
    {"degenerate exactness", degenerate_exactness},
    {"linear height growth", linear_growth},
    {"rate reciprocity", rate_reciprocity},
    {"log width growth in d=1", log_width_growth},
    {"positive variance in d=2", positive_variance},
    {"renewal structure in d=1", renewal_structure},
    {"moment boundedness", moment_boundedness},
    {"thermodynamic limit", thermodynamic_limit},
    {"continuum-lattice coupling", coupling},
    {"continuum path oracle", continuum_oracle},
};

}  // namespace

CriterionResult run_criterion(int id, const AcceptanceOptions& options) {
  if (id < 1 || id > kInProcessCriteria) throw std::out_of_range("no in-process criterion " + std::to_string(id));
  CriterionResult out;
  out.id = id;
  out.name = kCriteria[id - 1].name;
  Ctx c{options, id, out};
  const auto start = std::chrono::steady_clock::now();
  try {
    kCriteria[id - 1].fn(c);
  } catch (const std::exception& e) {
    c.verdict("completed", 0.0, 1.0, false, std::string("error: ") + e.what());
    out.summary = std::string("error: ") + e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.pass = !out.verdicts.empty() &&
             std::all_of(out.verdicts.begin(), out.verdicts.end(), [](const Verdict& v) { return v.pass; });
  return out;
}

std::string criterion_line(const CriterionResult& r) {
  char head[32];
  std::snprintf(head, sizeof head, "criterion %2d %s  ", r.id, r.pass ? "PASS" : "FAIL");
  return head + r.name + ": " + r.summary;
}

void write_criterion(const CriterionResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  char prefix[8];
  std::snprintf(prefix, sizeof prefix, "c%02d_", r.id);
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / (prefix + name), std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + (dir / (prefix + name)).string());
  };
  for (const auto& [name, text] : r.files) put(name, text);
  put("verdicts.json", verdicts_json(r.verdicts));
}

}  // namespace bdlab
