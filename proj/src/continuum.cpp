#include "bdlab/continuum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "bdlab/csv.hpp"

namespace bdlab {

namespace {

double dist_sq(const Point& a, const Point& b, int dim) noexcept {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double d = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
    s += d * d;
  }
  return s;
}

bool point_before(double ta, const Point& xa, double tb, const Point& xb) noexcept {
  return ta < tb || (ta == tb && xa < xb);
}

bool marked_before(const MarkedPoint& a, const MarkedPoint& b) noexcept {
  return point_before(a.time, a.x, b.time, b.x);
}

std::int32_t floor_cell(double v) { return static_cast<std::int32_t>(std::floor(v)); }

/// c + u for u in (0, 1), kept below c + 1 where rounding would reach it.
double cell_coordinate(std::int32_t c, double u) {
  const double v = c + u;
  const double top = static_cast<double>(c) + 1.0;
  return v < top ? v : std::nextafter(top, static_cast<double>(c));
}

/// Unit cells meeting the axis box [x - rho, x + rho].
template <class F>
void cells_around(const Point& x, double rho, int dim, F&& f) {
  Site lo{}, hi{};
  for (int a = 0; a < dim; ++a) {
    lo[a] = floor_cell(x[static_cast<std::size_t>(a)] - rho);
    hi[a] = floor_cell(x[static_cast<std::size_t>(a)] + rho);
  }
  Site c = lo;
  while (true) {
    f(c);
    int a = 0;
    for (; a < dim; ++a) {
      if (c[a] < hi[a]) {
        ++c[a];
        break;
      }
      c[a] = lo[a];
    }
    if (a == dim) return;
  }
}

double unit_ball_volume(int dim, double r) {
  const double d = dim;
  return std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1.0) * std::pow(r, d);
}

}  // namespace

// ---------------------------------------------------------------- radius law

RadiusLaw RadiusLaw::fixed(double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("radius must be positive");
  RadiusLaw law;
  law.kind_ = Kind::fixed;
  law.lo_ = law.r_max_ = r;
  return law;
}

RadiusLaw RadiusLaw::discrete(std::vector<std::pair<double, double>> table) {
  if (table.empty()) throw std::invalid_argument("discrete radius law needs at least one entry");
  RadiusLaw law;
  law.kind_ = Kind::discrete;
  double total = 0.0;
  for (const auto& [r, p] : table) {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("radius must be positive");
    if (!(p > 0.0) || !std::isfinite(p)) throw std::invalid_argument("weights must be positive");
    total += p;
  }
  double acc = 0.0;
  for (const auto& [r, p] : table) {
    acc += p / total;
    law.radii_.push_back(r);
    law.cumulative_.push_back(acc);
    law.r_max_ = std::max(law.r_max_, r);
  }
  law.cumulative_.back() = 1.0;
  law.lo_ = *std::min_element(law.radii_.begin(), law.radii_.end());
  return law;
}

RadiusLaw RadiusLaw::uniform(double lo, double hi) {
  if (!(lo > 0.0) || !(hi >= lo) || !std::isfinite(hi)) {
    throw std::invalid_argument("uniform radius law needs 0 < lo <= hi");
  }
  RadiusLaw law;
  law.kind_ = Kind::uniform;
  law.lo_ = lo;
  law.r_max_ = hi;
  return law;
}

double RadiusLaw::sample(Stream& rng) const {
  switch (kind_) {
    case Kind::fixed: return r_max_;
    case Kind::uniform: return lo_ + (r_max_ - lo_) * rng.uniform();
    case Kind::discrete: {
      const double u = rng.uniform();
      const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
      return radii_[static_cast<std::size_t>(it - cumulative_.begin())];
    }
  }
  return r_max_;
}

std::string RadiusLaw::describe() const {
  switch (kind_) {
    case Kind::fixed: return "fixed:" + format_double(r_max_);
    case Kind::uniform: return "uniform:" + format_double(lo_) + ":" + format_double(r_max_);
    case Kind::discrete: {
      std::string s = "discrete:";
      double prev = 0.0;
      for (std::size_t i = 0; i < radii_.size(); ++i) {
        if (i) s += ',';
        s += format_double(radii_[i]) + "=" + format_double(cumulative_[i] - prev);
        prev = cumulative_[i];
      }
      return s;
    }
  }
  return {};
}

RadiusLaw parse_radius_law(const std::string& spec) {
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw std::invalid_argument("bad number in radius law: " + spec);
    return v;
  };
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "fixed") return RadiusLaw::fixed(number(rest));
  if (kind == "uniform") {
    const auto c = rest.find(':');
    if (c == std::string::npos) throw std::invalid_argument("uniform law needs lo:hi");
    return RadiusLaw::uniform(number(rest.substr(0, c)), number(rest.substr(c + 1)));
  }
  if (kind == "discrete") {
    std::vector<std::pair<double, double>> table;
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("discrete entry needs r=p: " + item);
      table.emplace_back(number(item.substr(0, eq)), number(item.substr(eq + 1)));
    }
    return RadiusLaw::discrete(std::move(table));
  }
  throw std::invalid_argument("unknown radius law: " + spec);
}

// ------------------------------------------------------------ point process

std::vector<MarkedPoint> cell_points(std::uint64_t seed, const Site& cell, int dim, double horizon,
                                     const RadiusLaw& law) {
  std::vector<MarkedPoint> out;
  if (!(horizon > 0.0)) return out;
  Stream rng(seed, StreamTag::continuum_cell, site_key(cell));
  double s = 0.0;
  double prev = 0.0;
  while (true) {
    s += rng.exponential();
    double t = quantize_time(s);
    if (t <= prev) t = prev + kTimeQuantum;
    if (t >= horizon) return out;
    prev = t;
    MarkedPoint p;
    for (int a = 0; a < dim; ++a) {
      p.x[static_cast<std::size_t>(a)] = cell_coordinate(cell[a], rng.uniform());
    }
    p.time = t;
    p.radius = law.sample(rng);
    out.push_back(p);
  }
}

std::vector<MarkedPoint> generate_marked_poisson(const Box& cells, double t, const RadiusLaw& law,
                                                 std::uint64_t seed) {
  std::vector<MarkedPoint> out;
  for (const auto& c : cells.sites()) {
    auto pts = cell_points(seed, c, cells.dim(), t, law);
    out.insert(out.end(), pts.begin(), pts.end());
  }
  std::sort(out.begin(), out.end(), marked_before);
  return out;
}

std::vector<MarkedPoint> reverse_points(const std::vector<MarkedPoint>& pts, double t) {
  std::vector<MarkedPoint> out;
  out.reserve(pts.size());
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) out.push_back({it->x, t - it->time, it->radius});
  if (!std::is_sorted(out.begin(), out.end(), marked_before)) {
    std::sort(out.begin(), out.end(), marked_before);
  }
  return out;
}

// ------------------------------------------------------------- agglomeration

Agglomeration::Agglomeration(int dim, double r_max, AggregateMode mode)
    : dim_(dim), r_max_(r_max), side_(2.0 * r_max), mode_(mode) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("dimension must be 1..3");
  if (!(r_max > 0.0)) throw std::invalid_argument("r_max must be positive");
}

std::uint64_t Agglomeration::grid_key(const Point& x) const noexcept {
  Site s{};
  for (int a = 0; a < dim_; ++a) s[a] = floor_cell(x[static_cast<std::size_t>(a)] / side_);
  return site_key(s);
}

template <class F>
void Agglomeration::for_neighbour_cells(const Point& x, F&& f) const {
  Site base{};
  for (int a = 0; a < dim_; ++a) base[a] = floor_cell(x[static_cast<std::size_t>(a)] / side_);
  int count = 1;
  for (int a = 0; a < dim_; ++a) count *= 3;
  for (int k = 0; k < count; ++k) {
    Site s = base;
    int rem = k;
    for (int a = 0; a < dim_; ++a) {
      s[a] += rem % 3 - 1;
      rem /= 3;
    }
    const auto it = grid_.find(site_key(s));
    if (it != grid_.end()) f(it->second);
  }
}

std::optional<double> Agglomeration::contact_height(const Point& x, double r) const {
  double best = kNegInf;
  if (mode_ == AggregateMode::forward) {
    best = r;
  } else {
    const double d2 = dist_sq(x, Point{}, dim_);
    if (d2 <= r * r) best = std::sqrt(r * r - d2);
  }
  for_neighbour_cells(x, [&](const std::vector<std::uint32_t>& ids) {
    // Ids are sorted by centre height, so walk down from the top.
    for (auto it = ids.rbegin(); it != ids.rend(); ++it) {
      const Ball& b = balls_[*it];
      if (b.z + r + r_max_ <= best) break;
      const double reach = r + b.r;
      const double d2 = dist_sq(x, b.x, dim_);
      if (d2 < reach * reach) best = std::max(best, b.z + std::sqrt(reach * reach - d2));
    }
  });
  if (best == kNegInf) return std::nullopt;
  return best;
}

std::optional<double> Agglomeration::contact_height_bruteforce(const Point& x, double r) const {
  double best = kNegInf;
  if (mode_ == AggregateMode::forward) {
    best = r;
  } else {
    const double d2 = dist_sq(x, Point{}, dim_);
    if (d2 <= r * r) best = std::sqrt(r * r - d2);
  }
  for (const Ball& b : balls_) {
    const double reach = r + b.r;
    const double d2 = dist_sq(x, b.x, dim_);
    if (d2 < reach * reach) best = std::max(best, b.z + std::sqrt(reach * reach - d2));
  }
  if (best == kNegInf) return std::nullopt;
  return best;
}

std::optional<std::size_t> Agglomeration::drop(const MarkedPoint& p) {
  if (p.radius > r_max_) throw std::invalid_argument("radius exceeds the index bound r_max");
  const auto z = contact_height(p.x, p.radius);
  if (!z) return std::nullopt;
  const auto id = static_cast<std::uint32_t>(balls_.size());
  balls_.push_back({p.x, p.radius, *z, p.time});
  auto& ids = grid_[grid_key(p.x)];
  const auto pos = std::upper_bound(ids.begin(), ids.end(), *z,
                                    [&](double v, std::uint32_t j) { return v < balls_[j].z; });
  ids.insert(pos, id);
  depth_ = std::max(depth_, *z + p.radius);
  return id;
}

double Agglomeration::height_at(const Point& x) const {
  double best = mode_ == AggregateMode::forward ? 0.0 : kNegInf;
  if (mode_ == AggregateMode::dual && dist_sq(x, Point{}, dim_) == 0.0) best = 0.0;
  for_neighbour_cells(x, [&](const std::vector<std::uint32_t>& ids) {
    for (auto it = ids.rbegin(); it != ids.rend(); ++it) {
      const Ball& b = balls_[*it];
      if (b.z + r_max_ <= best) break;
      const double d2 = dist_sq(x, b.x, dim_);
      if (d2 <= b.r * b.r) best = std::max(best, b.z + std::sqrt(b.r * b.r - d2));
    }
  });
  return best;
}

double Agglomeration::height_at_bruteforce(const Point& x) const {
  double best = mode_ == AggregateMode::forward ? 0.0 : kNegInf;
  if (mode_ == AggregateMode::dual && dist_sq(x, Point{}, dim_) == 0.0) best = 0.0;
  for (const Ball& b : balls_) {
    const double d2 = dist_sq(x, b.x, dim_);
    if (d2 <= b.r * b.r) best = std::max(best, b.z + std::sqrt(b.r * b.r - d2));
  }
  return best;
}

Agglomeration deposit_all(const std::vector<MarkedPoint>& pts, int dim, double r_max,
                          AggregateMode mode) {
  Agglomeration agg(dim, r_max, mode);
  for (const auto& p : pts) agg.drop(p);
  return agg;
}

Agglomeration simulate_continuum(const Box& cells, double t, const RadiusLaw& law,
                                 std::uint64_t seed) {
  return deposit_all(generate_marked_poisson(cells, t, law, seed), cells.dim(), law.r_max(),
                     AggregateMode::forward);
}

// --------------------------------------------------------------- integrals

int points_per_unit(double h) {
  if (!(h > 0.0) || h > 1.0) throw std::invalid_argument("grid spacing must be in (0, 1]");
  return static_cast<int>(std::ceil(1.0 / h - 1e-12));
}

std::vector<Point> midpoint_grid(const Box& cells, int per_unit) {
  if (per_unit < 1) throw std::invalid_argument("need at least one grid point per unit");
  const int dim = cells.dim();
  Site lo{}, hi{};
  for (int a = 0; a < dim; ++a) {
    lo[a] = cells.lo()[a] * per_unit;
    hi[a] = (cells.hi()[a] + 1) * per_unit - 1;
  }
  const Box fine(dim, lo, hi);
  std::vector<Point> out;
  out.reserve(fine.size());
  const double step = 1.0 / per_unit;
  for (std::size_t i = 0; i < fine.size(); ++i) {
    const Site s = fine.site_at(i);
    Point p{};
    for (int a = 0; a < dim; ++a) p[static_cast<std::size_t>(a)] = (s[a] + 0.5) * step;
    out.push_back(p);
  }
  return out;
}

namespace {

std::pair<double, double> grid_moments(const Agglomeration& agg, const Box& cells, int per_unit) {
  const auto grid = midpoint_grid(cells, per_unit);
  std::vector<double> h(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) h[i] = agg.height_at(grid[i]);
  double sum = 0.0;
  for (double v : h) sum += v;
  const double mean = sum / static_cast<double>(h.size());
  double ss = 0.0;
  for (double v : h) ss += (v - mean) * (v - mean);
  return {mean, ss / static_cast<double>(h.size())};
}

}  // namespace

WidthEstimate mean_and_width(const Agglomeration& agg, const Box& cells, double h) {
  if (agg.mode() != AggregateMode::forward) throw std::invalid_argument("integrals need a forward agglomeration");
  const int m = points_per_unit(h);
  WidthEstimate w;
  w.h = 1.0 / m;
  std::tie(w.mean, w.width_sq) = grid_moments(agg, cells, m);
  std::tie(w.mean_half, w.width_sq_half) = grid_moments(agg, cells, 2 * m);
  return w;
}

// ---------------------------------------------------------------- paths

double path_height_at(const std::vector<MarkedPoint>& pts, const std::vector<std::size_t>& idx,
                      const Point& x, int dim) {
  double r_max = 0.0;
  for (auto i : idx) r_max = std::max(r_max, pts[i].radius);
  if (idx.empty()) return 0.0;
  Agglomeration agg(dim, r_max, AggregateMode::forward);
  for (auto i : idx) agg.drop(pts[i]);
  return agg.height_at_bruteforce(x);
}

std::vector<ContinuumPath> enumerate_continuum_paths(const std::vector<MarkedPoint>& pts, double t,
                                                     const Point& x, int dim, std::size_t cap) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].time < t) order.push_back(i);
  }
  if (order.size() > cap) throw std::length_error("too many points for path enumeration");
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return marked_before(pts[a], pts[b]); });

  std::vector<ContinuumPath> out;
  std::vector<std::size_t> chain;
  std::vector<double> z;  // centre heights of the chain's own deposition
  auto overlap = [&](std::size_t a, std::size_t b) {
    const double reach = pts[a].radius + pts[b].radius;
    return dist_sq(pts[a].x, pts[b].x, dim) < reach * reach;
  };
  auto push = [&](std::size_t i) {
    double best = pts[i].radius;
    for (std::size_t k = 0; k < chain.size(); ++k) {
      const auto& q = pts[chain[k]];
      const double reach = q.radius + pts[i].radius;
      const double d2 = dist_sq(q.x, pts[i].x, dim);
      if (d2 < reach * reach) best = std::max(best, z[k] + std::sqrt(reach * reach - d2));
    }
    chain.push_back(i);
    z.push_back(best);
  };
  auto record = [&]() {
    const auto& last = pts[chain.back()];
    if (dist_sq(x, last.x, dim) > last.radius * last.radius) return;
    double h = 0.0;
    for (std::size_t k = 0; k < chain.size(); ++k) {
      const auto& q = pts[chain[k]];
      const double d2 = dist_sq(x, q.x, dim);
      if (d2 <= q.radius * q.radius) h = std::max(h, z[k] + std::sqrt(q.radius * q.radius - d2));
    }
    out.push_back({chain, h});
  };
  auto extend = [&](auto&& self, std::size_t pos) -> void {
    record();
    for (std::size_t next = pos + 1; next < order.size(); ++next) {
      const std::size_t j = order[next];
      if (!(pts[j].time > pts[chain.back()].time) || !overlap(chain.back(), j)) continue;
      push(j);
      self(self, next);
      chain.pop_back();
      z.pop_back();
    }
  };
  for (std::size_t s = 0; s < order.size(); ++s) {
    push(order[s]);
    extend(extend, s);
    chain.pop_back();
    z.pop_back();
  }
  return out;
}

double max_continuum_path_height(const std::vector<MarkedPoint>& pts, double t, const Point& x,
                                 int dim, std::size_t cap) {
  double best = 0.0;
  for (const auto& p : enumerate_continuum_paths(pts, t, x, dim, cap)) best = std::max(best, p.height);
  return best;
}

// --------------------------------------------------------------- dual race

ContinuumDualTrace simulate_dual_continuum(int dim, const RadiusLaw& law, std::uint64_t seed,
                                           const ContinuumDualOptions& opt) {
  if (!std::isfinite(opt.t_max) && !std::isfinite(opt.u_max)) {
    throw std::invalid_argument("dual run needs a finite t_max or u_max");
  }
  ContinuumDualTrace tr;
  tr.dim = dim;
  const double r_max = law.r_max();
  Agglomeration agg(dim, r_max, AggregateMode::dual);

  struct Clock {
    double time;
    std::uint64_t key;
    bool operator>(const Clock& o) const noexcept {
      return time > o.time || (time == o.time && key > o.key);
    }
  };
  std::priority_queue<Clock, std::vector<Clock>, std::greater<>> heap;
  absl::flat_hash_map<std::uint64_t, Stream> streams;

  auto activate = [&](const Point& centre, double rho, double now) {
    cells_around(centre, rho, dim, [&](const Site& c) {
      const auto key = site_key(c);
      auto [it, fresh] = streams.try_emplace(key, Stream(seed, StreamTag::continuum_race, key));
      if (fresh) heap.push({now + it->second.exponential(), key});
    });
  };

  const bool line = dim == 1;
  double lo = 0.0, hi = 0.0;
  auto measure = [&] { return line ? hi - lo : std::numeric_limits<double>::quiet_NaN(); };

  tr.depth.push(0.0, 0.0);
  if (line) tr.interface.push(0.0, 0.0);
  activate(Point{}, r_max, 0.0);
  bool by_time = false;
  double clock = 0.0;

  while (agg.depth() < opt.u_max) {
    if (tr.proposals >= opt.max_proposals) throw std::runtime_error("dual run exceeded max_proposals");
    const Clock c = heap.top();
    if (c.time > opt.t_max) {
      by_time = true;
      break;
    }
    heap.pop();
    clock = c.time;
    ++tr.proposals;
    Stream& rng = streams.find(c.key)->second;
    const Site cell = site_from_key(c.key);
    MarkedPoint p;
    for (int a = 0; a < dim; ++a) p.x[static_cast<std::size_t>(a)] = cell_coordinate(cell[a], rng.uniform());
    p.time = clock;
    p.radius = law.sample(rng);
    // Reschedule before activation can rehash the stream table.
    heap.push({clock + rng.exponential(), c.key});
    const double prior = measure();
    if (agg.drop(p)) {
      tr.accepted.push_back({clock, p.x, p.radius, prior});
      if (line) {
        lo = std::min(lo, p.x[0] - p.radius);
        hi = std::max(hi, p.x[0] + p.radius);
        tr.interface.push(clock, measure());
      }
      tr.depth.push(clock, agg.depth());
      activate(p.x, p.radius + r_max, clock);
    }
  }
  tr.end_time = by_time ? opt.t_max : clock;
  tr.depth.end_time = tr.interface.end_time = tr.end_time;
  tr.passage = passage_table(tr.depth, opt.u_grid);
  for (double t : opt.t_grid) {
    if (t >= 0.0 && t <= tr.end_time) {
      tr.samples.push_back({t, tr.depth.at(t),
                            line ? tr.interface.at(t) : std::numeric_limits<double>::quiet_NaN()});
    }
  }
  return tr;
}

double first_passage(const ContinuumDualTrace& trace, double u) { return trace.depth.first_passage(u); }

// ------------------------------------------------------------- light cone

ContinuumConeResult continuum_lightcone_height(int dim, const RadiusLaw& law, std::uint64_t seed,
                                               double t, const Box& cells) {
  if (cells.dim() != dim) throw std::invalid_argument("cell box dimension mismatch");
  if (!cells.contains(Site{})) throw std::invalid_argument("cell box must contain the origin cell");
  ContinuumConeResult res;
  const double r_max = law.r_max();
  Agglomeration agg(dim, r_max, AggregateMode::dual);

  struct ConeCell {
    std::vector<MarkedPoint> pts;  // forward order
    std::size_t cursor = 0;        // points [0, cursor) are still pending in reversed order
  };
  struct Pending {
    double time;
    Point x;
    std::uint32_t slot;
  };
  struct PendingAfter {
    bool operator()(const Pending& a, const Pending& b) const noexcept {
      return point_before(b.time, b.x, a.time, a.x);
    }
  };
  std::vector<ConeCell> cone;
  absl::flat_hash_map<std::uint64_t, std::uint32_t> slot_of;
  std::priority_queue<Pending, std::vector<Pending>, PendingAfter> heap;

  auto schedule_next = [&](std::uint32_t k, double after_t, const Point& after_x) {
    auto& st = cone[k];
    while (st.cursor > 0) {
      const auto& p = st.pts[st.cursor - 1];
      const double rev = t - p.time;
      if (point_before(after_t, after_x, rev, p.x)) {
        heap.push({rev, p.x, k});
        return;
      }
      --st.cursor;
    }
  };
  auto activate = [&](const Point& centre, double rho, double after_t, const Point& after_x) {
    cells_around(centre, rho, dim, [&](const Site& c) {
      if (!cells.contains(c)) {
        res.escaped = true;
        return;
      }
      auto [it, fresh] = slot_of.try_emplace(site_key(c), static_cast<std::uint32_t>(cone.size()));
      if (!fresh) return;
      cone.emplace_back();
      cone.back().pts = cell_points(seed, c, dim, t, law);
      cone.back().cursor = cone.back().pts.size();
      schedule_next(it->second, after_t, after_x);
    });
  };

  activate(Point{}, r_max, 0.0, Point{});
  while (!heap.empty()) {
    const Pending p = heap.top();
    heap.pop();
    ++res.events_processed;
    auto& st = cone[p.slot];
    const double radius = st.pts[st.cursor - 1].radius;
    --st.cursor;
    if (agg.drop({p.x, p.time, radius})) activate(p.x, radius + r_max, p.time, p.x);
    schedule_next(p.slot, p.time, p.x);
  }
  res.height = agg.depth();
  res.balls = agg.balls().size();
  res.cells_touched = cone.size();
  return res;
}

std::int32_t continuum_certified_radius(double t, int dim, double r_max, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("tolerance must be in (0, 1)");
  if (!(r_max > 0.0)) throw std::invalid_argument("r_max must be positive");
  if (t <= 0.0) return static_cast<std::int32_t>(std::ceil(r_max)) + 1;
  // Chains of k time-ordered overlapping balls ending near the origin: expected
  // count at most v1 v2^(k-1) t^k / k!. Past k + 1 >= 2 v2 t the terms at least
  // halve, so the tail from k is at most twice its first term.
  const double v1 = unit_ball_volume(dim, r_max);
  const double v2 = unit_ball_volume(dim, 2.0 * r_max);
  const double log_eps = std::log(eps);
  for (std::int64_t k = 1;; ++k) {
    const double kd = static_cast<double>(k);
    if (kd + 1.0 < 2.0 * v2 * t) continue;
    const double log_term = std::log(v1) + (kd - 1.0) * std::log(v2) + kd * std::log(t) - std::lgamma(kd + 1.0);
    if (std::log(2.0) + log_term < log_eps) {
      // A chain of fewer than k balls stays within r_max + 2 r_max (k - 2) of the origin.
      return static_cast<std::int32_t>(std::ceil(r_max + 2.0 * r_max * (kd - 1.0))) + 1;
    }
  }
}

ContinuumCertified continuum_height_certified(double t, int dim, const RadiusLaw& law,
                                              std::uint64_t seed, double eps) {
  ContinuumCertified out;
  out.radius = continuum_certified_radius(t, dim, law.r_max(), eps);
  const auto small = continuum_lightcone_height(dim, law, seed, t, Box::centered_radius(dim, out.radius));
  out.height = small.height;
  if (!small.escaped) {
    out.doubled_height = small.height;
    out.certified = true;
    return out;
  }
  const auto big = continuum_lightcone_height(dim, law, seed, t, Box::centered_radius(dim, 2 * out.radius));
  out.doubled_height = big.height;
  out.certified = big.height == small.height;
  return out;
}

ContinuumDualityReport continuum_duality_check(double t, int dim, const RadiusLaw& law,
                                               std::uint64_t seed, double eps, double tol) {
  ContinuumDualityReport rep;
  const auto radius = continuum_certified_radius(t, dim, law.r_max(), eps);
  const Box cells = Box::centered_radius(dim, radius);
  const auto pts = generate_marked_poisson(cells, t, law, seed);
  rep.forward = deposit_all(pts, dim, law.r_max(), AggregateMode::forward).height_at(Point{});
  rep.dual = deposit_all(reverse_points(pts, t), dim, law.r_max(), AggregateMode::dual).depth();
  const auto cone = continuum_lightcone_height(dim, law, seed, t, cells);
  rep.lightcone = cone.height;
  rep.certified = !cone.escaped ||
                  continuum_lightcone_height(dim, law, seed, t, Box::centered_radius(dim, 2 * radius)).height ==
                      cone.height;
  rep.agree = std::abs(rep.forward - rep.dual) <= tol && std::abs(rep.forward - rep.lightcone) <= tol;
  return rep;
}

// ---------------------------------------------------------------- coupling

CouplingReport lattice_coupling(const Box& cells, double t, const RadiusLaw& law,
                                std::uint64_t seed, int per_unit) {
  const int dim = cells.dim();
  const auto pts = generate_marked_poisson(cells, t, law, seed);
  const auto agg = deposit_all(pts, dim, law.r_max(), AggregateMode::forward);
  ArrivalRealization r{cells, t, seed, {}};
  r.events.reserve(pts.size());
  for (const auto& p : pts) {
    Site z{};
    for (int a = 0; a < dim; ++a) z[a] = floor_cell(p.x[static_cast<std::size_t>(a)]);
    r.events.push_back({z, p.time});
  }
  std::sort(r.events.begin(), r.events.end(), arrival_before);
  const auto nnn = DisplacementFunction::next_nearest_neighbour(dim);
  const auto field = replay_forward(r, nnn);
  CouplingReport rep;
  for (const auto& x : midpoint_grid(cells, per_unit)) {
    Site z{};
    for (int a = 0; a < dim; ++a) z[a] = floor_cell(x[static_cast<std::size_t>(a)]);
    const double excess = agg.height_at(x) - next_arrival_height(field, z, nnn);
    ++rep.grid_points;
    if (excess > 0.0) ++rep.violations;
    rep.max_excess = std::max(rep.max_excess, excess);
  }
  return rep;
}

// -------------------------------------------------------------------- CSV

namespace {

constexpr const char* kAxes[] = {"x", "y", "z"};

std::vector<std::string> axis_header(int dim) {
  std::vector<std::string> h;
  for (int a = 0; a < dim; ++a) h.emplace_back(kAxes[a]);
  return h;
}

void push_coords(std::vector<std::string>& row, const Point& x, int dim) {
  for (int a = 0; a < dim; ++a) row.push_back(cell(x[static_cast<std::size_t>(a)]));
}

}  // namespace

std::string agglomeration_csv(const Agglomeration& agg) {
  auto header = axis_header(agg.dim());
  for (const char* c : {"r", "z_c", "T"}) header.emplace_back(c);
  CsvTable table(std::move(header));
  for (const auto& b : agg.balls()) {
    std::vector<std::string> row;
    push_coords(row, b.x, agg.dim());
    row.push_back(cell(b.r));
    row.push_back(cell(b.z));
    row.push_back(cell(b.time));
    table.row(std::move(row));
  }
  return table.str();
}

std::string profile_csv(const Agglomeration& agg, const std::vector<Point>& grid) {
  auto header = axis_header(agg.dim());
  header.emplace_back("H");
  CsvTable table(std::move(header));
  for (const auto& x : grid) {
    std::vector<std::string> row;
    push_coords(row, x, agg.dim());
    row.push_back(cell(agg.height_at(x)));
    table.row(std::move(row));
  }
  return table.str();
}

std::string continuum_accepted_csv(const ContinuumDualTrace& trace) {
  auto header = std::vector<std::string>{"j", "tau"};
  for (auto& a : axis_header(trace.dim)) header.push_back(a);
  header.emplace_back("r");
  header.emplace_back("I_prev");
  CsvTable table(std::move(header));
  for (std::size_t j = 0; j < trace.accepted.size(); ++j) {
    const auto& a = trace.accepted[j];
    std::vector<std::string> row{cell(j + 1), cell(a.time)};
    push_coords(row, a.x, trace.dim);
    row.push_back(cell(a.radius));
    row.push_back(cell(a.prior));
    table.row(std::move(row));
  }
  return table.str();
}

std::string continuum_passage_csv(const ContinuumDualTrace& trace) {
  CsvTable table({"u", "T"});
  for (const auto& [u, t] : trace.passage) table.row({cell(u), cell(t)});
  return table.str();
}

std::string continuum_samples_csv(const ContinuumDualTrace& trace) {
  CsvTable table({"t", "D", "I"});
  for (const auto& s : trace.samples) table.row({cell(s.t), cell(s.depth), cell(s.interface)});
  return table.str();
}

}  // namespace bdlab
