#include "bdlab/graph.hpp"

#include <algorithm>
#include <stdexcept>

#include "bdlab/csv.hpp"

namespace bdlab {

namespace {
constexpr std::uint32_t kNoVertex = 0xffffffffU;
}

EventGraph::EventGraph(const ArrivalRealization& r, const DisplacementFunction& d, Direction dir)
    : dir_(dir), horizon_(r.horizon), window_(r.window), d_(d) {
  if (d.dim() != r.window.dim()) throw std::invalid_argument("dimension mismatch");
  const std::size_t w = window_.size();
  for (const auto& e : r.events) {
    if (!(e.time < horizon_)) continue;
    if (!window_.contains(e.site)) throw std::invalid_argument("event outside the window");
    vertices_.push_back({e.site, e.time, GraphVertex::Kind::event});
  }
  event_count_ = vertices_.size();
  for (std::size_t i = 1; i < event_count_; ++i) {
    const Arrival a{vertices_[i - 1].site, vertices_[i - 1].time};
    const Arrival b{vertices_[i].site, vertices_[i].time};
    if (!arrival_before(a, b)) throw std::invalid_argument("events must be sorted and distinct");
  }
  for (std::size_t i = 0; i < w; ++i) vertices_.push_back({window_.site_at(i), 0.0, GraphVertex::Kind::substrate});
  for (std::size_t i = 0; i < w; ++i) vertices_.push_back({window_.site_at(i), horizon_, GraphVertex::Kind::top});

  site_offsets_.assign(w + 1, 0);
  for (std::size_t v = 0; v < event_count_; ++v) ++site_offsets_[window_.index(vertices_[v].site) + 1];
  for (std::size_t i = 0; i < w; ++i) site_offsets_[i + 1] += site_offsets_[i];
  site_events_.resize(event_count_);
  std::vector<std::uint32_t> fill(site_offsets_.begin(), site_offsets_.end() - 1);
  for (std::size_t v = 0; v < event_count_; ++v) {
    site_events_[fill[window_.index(vertices_[v].site)]++] = static_cast<std::uint32_t>(v);
  }
}

std::span<const std::uint32_t> EventGraph::events_at(const Site& s) const noexcept {
  if (!window_.contains(s)) return {};
  const std::size_t i = window_.index(s);
  return {site_events_.data() + site_offsets_[i], site_offsets_[i + 1] - site_offsets_[i]};
}

double EventGraph::substrate_height(const Site& s) const noexcept {
  if (dir_ == Direction::forward) return 0.0;
  return s == Site{} ? 0.0 : kNegInf;
}

namespace {

// Best entry into a vertex whose id is `before` (events with smaller id are
// earlier in the strict (time, site) order; kNoVertex means the top row).
std::pair<double, Predecessor> best_entry(const EventGraph& g, const std::vector<double>& value,
                                          const Site& y, std::uint32_t before) {
  double best = kNegInf;
  Predecessor pred;
  g.for_each_predecessor(y, [&](const Site& x, double w) {
    const double base = g.substrate_height(x);
    if (base + w > best) {
      best = base + w;
      pred = {-1, x};
    }
    for (std::uint32_t u : g.events_at(x)) {
      if (u >= before) break;
      if (value[u] + w > best) {
        best = value[u] + w;
        pred = {static_cast<std::int64_t>(u), x};
      }
    }
  });
  return {best, pred};
}

}  // namespace

PathDp solve_paths(const EventGraph& g) {
  PathDp dp;
  const std::size_t n = g.event_count();
  dp.value.assign(n, kNegInf);
  dp.pred.assign(n, Predecessor{});
  const auto vs = g.vertices();
  const Box& w = g.window();
  // best[i]: max DP value over all events processed so far at window site i,
  // i.e. over every earlier vertex there, not just the latest one.
  std::vector<double> best(w.size(), kNegInf);
  std::vector<std::int64_t> arg(w.size(), -1);
  for (std::size_t v = 0; v < n; ++v) {
    double h = kNegInf;
    Predecessor p;
    g.for_each_predecessor(vs[v].site, [&](const Site& x, double wt) {
      const double base = g.substrate_height(x);
      if (base + wt > h) {
        h = base + wt;
        p = {-1, x};
      }
      if (w.contains(x)) {
        const std::size_t i = w.index(x);
        if (best[i] + wt > h) {
          h = best[i] + wt;
          p = {arg[i], x};
        }
      }
    });
    dp.value[v] = h;
    dp.pred[v] = p;
    const std::size_t i = w.index(vs[v].site);
    if (h > best[i]) {
      best[i] = h;
      arg[i] = static_cast<std::int64_t>(v);
    }
  }
  return dp;
}

double max_path_height(const EventGraph& g, const PathDp& dp, const Site& z) {
  return best_entry(g, dp.value, z, kNoVertex).first;
}

double max_path_height(const ArrivalRealization& r, double t, const Site& z,
                       const DisplacementFunction& d, Direction dir) {
  ArrivalRealization clipped{r.window, t, r.seed, {}};
  for (const auto& e : r.events) {
    if (e.time < t) clipped.events.push_back(e);
  }
  const EventGraph g(clipped, d, dir);
  return max_path_height(g, solve_paths(g), z);
}

std::vector<Site> GraphPath::skeleton() const {
  std::vector<Site> out;
  out.reserve(vertices.size());
  for (const auto& v : vertices) out.push_back(v.site);
  return out;
}

double path_height(const std::vector<Site>& skeleton, const DisplacementFunction& d, Direction dir) {
  double h = 0.0;
  for (std::size_t j = 1; j < skeleton.size(); ++j) {
    const Site step = skeleton[j] - skeleton[j - 1];
    const auto w = d.at(dir == Direction::forward ? step : -step);
    if (!w) return kNegInf;
    h += *w;
  }
  return h;
}

GraphPath best_path(const EventGraph& g, const PathDp& dp, const Site& z) {
  GraphPath path;
  auto [h, p] = best_entry(g, dp.value, z, kNoVertex);
  path.height = h;
  if (h == kNegInf) return path;
  std::vector<GraphVertex> rev{{z, g.horizon(), GraphVertex::Kind::top}};
  const auto vs = g.vertices();
  while (p.vertex >= 0) {
    const auto u = static_cast<std::size_t>(p.vertex);
    rev.push_back(vs[u]);
    p = dp.pred[u];
  }
  rev.push_back({p.site, 0.0, GraphVertex::Kind::substrate});
  path.vertices.assign(rev.rbegin(), rev.rend());
  return path;
}

std::vector<GraphPath> enumerate_paths(const ArrivalRealization& r, double t, const Site& z,
                                       const DisplacementFunction& d, Direction dir,
                                       std::size_t cap) {
  ArrivalRealization clipped{r.window, t, r.seed, {}};
  for (const auto& e : r.events) {
    if (e.time < t) clipped.events.push_back(e);
  }
  if (clipped.events.size() > cap) {
    throw std::length_error("path enumeration refused: " + std::to_string(clipped.events.size()) +
                            " events exceed the cap of " + std::to_string(cap));
  }
  const EventGraph g(clipped, d, dir);
  const auto vs = g.vertices();

  std::vector<GraphPath> out;
  std::vector<GraphVertex> stack{{z, t, GraphVertex::Kind::top}};
  std::vector<double> weights;

  auto emit = [&](const Site& x0) {
    GraphPath p;
    p.vertices.push_back({x0, 0.0, GraphVertex::Kind::substrate});
    p.vertices.insert(p.vertices.end(), stack.rbegin(), stack.rend());
    p.height = g.substrate_height(x0);
    for (double w : weights) p.height += w;
    out.push_back(std::move(p));
  };

  auto walk = [&](auto&& self, const Site& y, std::uint32_t before) -> void {
    g.for_each_predecessor(y, [&](const Site& x, double w) {
      weights.push_back(w);
      if (g.substrate_height(x) != kNegInf) emit(x);
      for (std::uint32_t u : g.events_at(x)) {
        if (u >= before) break;
        stack.push_back(vs[u]);
        self(self, x, u);
        stack.pop_back();
      }
      weights.pop_back();
    });
  };
  walk(walk, z, kNoVertex);
  return out;
}

ArrivalRealization reverse_realization(const ArrivalRealization& r, double t) {
  ArrivalRealization out{r.window, t, r.seed, {}};
  out.events.reserve(r.events.size());
  for (auto it = r.events.rbegin(); it != r.events.rend(); ++it) {
    out.events.push_back({it->site, t - it->time});
  }
  // Reversing a (time, site)-sorted list leaves only equal-time runs out of order.
  if (!std::is_sorted(out.events.begin(), out.events.end(), arrival_before)) {
    std::sort(out.events.begin(), out.events.end(), arrival_before);
  }
  return out;
}

DualityReport duality_check(const ArrivalRealization& r, double t, const DisplacementFunction& d) {
  DualityReport rep;
  ArrivalRealization clipped{r.window, t, r.seed, {}};
  for (const auto& e : r.events) {
    if (e.time < t) clipped.events.push_back(e);
  }

  const EventGraph fg(clipped, d, Direction::forward);
  rep.forward_graph = max_path_height(fg, solve_paths(fg), Site{});
  rep.forward_replay = next_arrival_height(replay_forward(clipped, d), Site{}, d);

  const ArrivalRealization rev = reverse_realization(clipped, t);
  const EventGraph dg(rev, d, Direction::reversed);
  const PathDp ddp = solve_paths(dg);
  // Endpoints z with a finite dual height are z = x - off for a reachable x.
  absl::flat_hash_map<std::uint64_t, bool> seen;
  auto try_end = [&](const Site& x) {
    for (const auto& e : d.entries()) {
      const Site z = x - e.offset;
      if (seen.try_emplace(site_key(z), true).second) {
        rep.dual_graph = std::max(rep.dual_graph, max_path_height(dg, ddp, z));
      }
    }
  };
  try_end(Site{});
  const auto vs = dg.vertices();
  for (std::size_t v = 0; v < dg.event_count(); ++v) {
    if (ddp.value[v] != kNegInf) try_end(vs[v].site);
  }
  rep.dual_replay = replay_dual_depth(rev, d);
  rep.equal = rep.forward_graph == rep.forward_replay && rep.forward_graph == rep.dual_graph &&
              rep.forward_graph == rep.dual_replay;
  return rep;
}

DualityReport certified_duality_check(double t, const DisplacementFunction& d, std::uint64_t seed,
                                      double eps, WindowChoice choice) {
  const auto cert = origin_height_certified(t, d, seed, eps, OriginQuantity::next_arrival);
  const std::int32_t radius = std::max(cert.radius, d.range());
  const Box full = Box::centered_radius(d.dim(), radius);
  Box window = full;
  if (choice == WindowChoice::light_cone) {
    const Box grown = cert.reach.expanded(d.range());
    Site lo{}, hi{};
    for (int a = 0; a < d.dim(); ++a) {
      lo[a] = std::max(grown.lo()[a], full.lo()[a]);
      hi[a] = std::min(grown.hi()[a], full.hi()[a]);
    }
    window = Box(d.dim(), lo, hi);
  }
  DualityReport rep = duality_check(generate_arrivals(window, t, seed), t, d);
  rep.window = window;
  // The forward replay on the chosen window must reproduce the certified
  // infinite-lattice value; this is what certifies a light-cone window.
  rep.certified = cert.certified && cert.height == rep.forward_replay;
  return rep;
}

std::string event_graph_csv(const EventGraph& g, const PathDp& dp) {
  static constexpr const char* axes[] = {"x", "y", "z"};
  const int dim = g.window().dim();
  std::vector<std::string> header{"id", "kind"};
  for (int i = 0; i < dim; ++i) header.emplace_back(axes[i]);
  header.insert(header.end(), {"time", "value", "pred_id", "pred_site"});
  CsvTable table(header);
  const auto vs = g.vertices();
  for (std::size_t v = 0; v < vs.size(); ++v) {
    const auto& vx = vs[v];
    std::vector<std::string> row{cell(v)};
    double value = kNegInf;
    Predecessor pred;
    switch (vx.kind) {
      case GraphVertex::Kind::event:
        row.emplace_back("event");
        value = dp.value[v];
        pred = dp.pred[v];
        break;
      case GraphVertex::Kind::substrate:
        row.emplace_back("substrate");
        value = g.substrate_height(vx.site);
        pred = {-1, vx.site};
        break;
      case GraphVertex::Kind::top: {
        row.emplace_back("top");
        auto [h, p] = best_entry(g, dp.value, vx.site, kNoVertex);
        value = h;
        pred = p;
        break;
      }
    }
    for (int a = 0; a < dim; ++a) row.push_back(cell(vx.site[a]));
    row.push_back(cell(vx.time));
    row.push_back(cell(value));
    row.push_back(cell(pred.vertex));
    std::string ps = format_site(pred.site, dim);
    std::replace(ps.begin(), ps.end(), ',', ' ');
    row.push_back(std::move(ps));
    table.row(std::move(row));
  }
  return table.str();
}

}  // namespace bdlab
