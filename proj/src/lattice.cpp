#include "bdlab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "bdlab/csv.hpp"
#include "bdlab/rng.hpp"

namespace bdlab {

// ---------------------------------------------------------------------------
// DisplacementFunction

DisplacementFunction::DisplacementFunction(int dim, std::vector<Entry> entries)
    : dim_(dim), entries_(std::move(entries)) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("dimension must be in 1..3");
  std::sort(entries_.begin(), entries_.end(),
            [](const Entry& a, const Entry& b) { return a.offset < b.offset; });
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].offset == entries_[i - 1].offset) {
      throw std::invalid_argument("duplicate offset in displacement table");
    }
  }
  max_value_ = kNegInf;
  range_ = 1;
  for (const auto& e : entries_) {
    for (int i = dim; i < kMaxDim; ++i) {
      if (e.offset[i] != 0) throw std::invalid_argument("offset has more axes than dimension");
    }
    if (!std::isfinite(e.value)) throw std::invalid_argument("displacement values must be finite");
    max_value_ = std::max(max_value_, e.value);
    range_ = std::max(range_, norm_inf(e.offset));
  }
  auto zero = at(Site{});
  if (!zero || *zero != 1.0) throw std::invalid_argument("displacement must satisfy D(0) = 1");
}

DisplacementFunction DisplacementFunction::from_table(int dim, std::vector<Entry> entries) {
  DisplacementFunction d(dim, std::move(entries));
  if (d.size() < 2) throw std::invalid_argument("neighbourhood must have at least two offsets");
  return d;
}

DisplacementFunction DisplacementFunction::unchecked(int dim, std::vector<Entry> entries) {
  return DisplacementFunction(dim, std::move(entries));
}

namespace {
std::vector<Site> cube_offsets(int dim) {
  std::vector<Site> out;
  const Box cube = Box::centered_radius(dim, 1);
  for (std::size_t i = 0; i < cube.size(); ++i) out.push_back(cube.site_at(i));
  return out;
}
}  // namespace

DisplacementFunction DisplacementFunction::nearest_neighbour(int dim) {
  std::vector<Entry> entries;
  for (const auto& s : cube_offsets(dim)) {
    const auto n1 = norm_1(s);
    if (n1 <= 1) entries.push_back({s, n1 == 0 ? 1.0 : 0.0});
  }
  return from_table(dim, std::move(entries));
}

DisplacementFunction DisplacementFunction::next_nearest_neighbour(int dim) {
  std::vector<Entry> entries;
  for (const auto& s : cube_offsets(dim)) entries.push_back({s, 1.0});
  return from_table(dim, std::move(entries));
}

std::optional<double> DisplacementFunction::at(const Site& offset) const noexcept {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), offset,
                             [](const Entry& e, const Site& s) { return e.offset < s; });
  if (it == entries_.end() || it->offset != offset) return std::nullopt;
  return it->value;
}

DisplacementFunction DisplacementFunction::dual() const {
  std::vector<Entry> flipped;
  flipped.reserve(entries_.size());
  for (const auto& e : entries_) flipped.push_back({-e.offset, e.value});
  return DisplacementFunction(dim_, std::move(flipped));
}

bool DisplacementFunction::is_lattice_interval() const noexcept {
  if (dim_ != 1) return false;
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (entries_[i].offset[0] != entries_[i - 1].offset[0] + 1) return false;
  }
  return true;
}

std::string DisplacementFunction::describe() const {
  std::string out;
  for (const auto& e : entries_) {
    if (!out.empty()) out += ';';
    out += format_site(e.offset, dim_) + ":" + format_double(e.value);
  }
  return out;
}

DisplacementFunction parse_displacement(const std::string& spec, int dim) {
  if (spec == "nn" || spec == "NN") return DisplacementFunction::nearest_neighbour(dim);
  if (spec == "nnn" || spec == "NNN") return DisplacementFunction::next_nearest_neighbour(dim);
  if (spec == "single") return DisplacementFunction::unchecked(dim, {{Site{}, 1.0}});
  std::vector<DisplacementFunction::Entry> entries;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("bad displacement entry: " + item);
    Site s{};
    std::stringstream cs(item.substr(0, colon));
    std::string c;
    int axis = 0;
    while (std::getline(cs, c, ',')) {
      if (axis >= dim) throw std::invalid_argument("offset has too many coordinates: " + item);
      s[axis++] = std::stoi(c);
    }
    if (axis != dim) throw std::invalid_argument("offset has too few coordinates: " + item);
    entries.push_back({s, std::stod(item.substr(colon + 1))});
  }
  return DisplacementFunction::from_table(dim, std::move(entries));
}

// ---------------------------------------------------------------------------
// Arrivals

std::vector<double> site_arrival_times(std::uint64_t seed, const Site& site, double horizon) {
  std::vector<double> out;
  if (!(horizon > 0.0)) return out;
  Stream rng(seed, StreamTag::lattice_site, site_key(site));
  double clock = 0.0;
  while (true) {
    clock += rng.exponential();
    const double q = quantize_time(clock);
    if (q >= horizon) break;
    if (!out.empty() && q <= out.back()) continue;  // two arrivals inside one quantum
    out.push_back(q);
  }
  return out;
}

ArrivalRealization generate_arrivals(const Box& window, double horizon, std::uint64_t seed) {
  if (horizon < 0.0) throw std::invalid_argument("horizon must be non-negative");
  ArrivalRealization r{window, horizon, seed, {}};
  if (horizon == 0.0) return r;
  // Sites are visited in lexicographic order, so sorting (time, index) keys
  // stably by time gives the (time, site) order.
  std::vector<Site> sites;
  std::vector<std::pair<double, std::uint32_t>> keys;
  keys.reserve(static_cast<std::size_t>(static_cast<double>(window.size()) * horizon * 1.05) + 16);
  const auto all = window.sites();
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return all[a] < all[b]; });
  for (std::size_t i : order) {
    const Site s = all[i];
    const auto idx = static_cast<std::uint32_t>(sites.size());
    sites.push_back(s);
    for (double time : site_arrival_times(seed, s, horizon)) keys.emplace_back(time, idx);
  }
  std::sort(keys.begin(), keys.end());
  r.events.reserve(keys.size());
  for (const auto& [time, idx] : keys) r.events.push_back({sites[idx], time});
  return r;
}

// ---------------------------------------------------------------------------
// Height fields

std::vector<std::pair<Site, double>> HeightField::sorted_entries() const {
  std::vector<std::pair<Site, double>> out;
  out.reserve(values_.size());
  for (const auto& [k, v] : values_) out.emplace_back(site_from_key(k), v);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

BoxedField::BoxedField(Box window, double fill, Boundary boundary)
    : window_(window), fill_(fill), boundary_(boundary), values_(window.size(), fill) {}

double BoxedField::at(const Site& s) const noexcept {
  if (boundary_ == Boundary::torus) return values_[window_.index(window_.wrap(s))];
  return window_.contains(s) ? values_[window_.index(s)] : fill_;
}

void BoxedField::set(const Site& s, double h) noexcept {
  if (boundary_ == Boundary::torus) {
    values_[window_.index(window_.wrap(s))] = h;
  } else if (window_.contains(s)) {
    values_[window_.index(s)] = h;
  }
}

HeightField BoxedField::to_height_field() const {
  HeightField f(window_.dim(), fill_);
  for (std::size_t i = 0; i < values_.size(); ++i) f.set(window_.site_at(i), values_[i]);
  return f;
}

BoxedField replay_forward(const ArrivalRealization& r, const DisplacementFunction& d,
                          Boundary boundary) {
  BoxedField field(r.window, 0.0, boundary);
  for (const auto& e : r.events) apply_arrival(field, e.site, d);
  return field;
}

HeightField simulate_forward(const Box& window, double t, const DisplacementFunction& d,
                             std::uint64_t seed, Boundary boundary) {
  return replay_forward(generate_arrivals(window, t, seed), d, boundary).to_height_field();
}

double replay_dual_depth(const ArrivalRealization& r, const DisplacementFunction& d) {
  if (!r.window.contains(Site{})) throw std::invalid_argument("dual replay needs the origin in the window");
  const DisplacementFunction dual = d.dual();
  BoxedField field(r.window, kNegInf);
  field.set(Site{}, 0.0);
  for (const auto& e : r.events) apply_arrival(field, e.site, dual);

  double depth = kNegInf;
  const auto values = field.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == kNegInf) continue;
    const Site y = r.window.site_at(i);
    // Every z whose dual neighbourhood contains y.
    for (const auto& e : dual.entries()) {
      depth = std::max(depth, next_arrival_height(field, y + e.offset, dual));
    }
  }
  return depth;
}

InterfaceSummary summarize(const HeightField& field, const Box& window) {
  InterfaceSummary s;
  s.site_count = window.size();
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < window.size(); ++i) {
    const double h = field.at(window.site_at(i));
    if (!std::isfinite(h)) throw std::domain_error("summarize: non-finite height in window");
    ++n;
    const double delta = h - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (h - mean);
  }
  s.mean = mean;
  s.width_sq = m2 / static_cast<double>(n);
  return s;
}

InterfaceSummary summarize(const BoxedField& field) {
  InterfaceSummary s;
  const auto values = field.values();
  s.site_count = values.size();
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (double h : values) {
    if (!std::isfinite(h)) throw std::domain_error("summarize: non-finite height in window");
    ++n;
    const double delta = h - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (h - mean);
  }
  s.mean = mean;
  s.width_sq = m2 / static_cast<double>(n);
  return s;
}

std::string height_field_csv(const HeightField& field, const Box& window) {
  static constexpr const char* axes[] = {"x", "y", "z"};
  std::vector<std::string> header;
  for (int i = 0; i < window.dim(); ++i) header.emplace_back(axes[i]);
  header.emplace_back("height");
  CsvTable table(header);
  for (std::size_t i = 0; i < window.size(); ++i) {
    const Site s = window.site_at(i);
    std::vector<std::string> row;
    for (int a = 0; a < window.dim(); ++a) row.push_back(cell(s[a]));
    row.push_back(cell(field.at(s)));
    table.row(std::move(row));
  }
  return table.str();
}

// ---------------------------------------------------------------------------
// Light-cone evaluation of the origin height

namespace {

struct Pending {
  double time;
  std::uint32_t slot;
};

struct ConeSite {
  Site site;
  std::vector<double> times;  // forward arrival times, ascending
  std::size_t cursor = 0;     // times[cursor-1] is the next reversed event
  std::vector<std::uint32_t> neighbours;  // slots of site + offset, kUnresolved until seen
  double xi = kNegInf;
  bool in_window = false;
};

constexpr std::uint32_t kUnresolved = std::numeric_limits<std::uint32_t>::max();

}  // namespace

LightconeResult lightcone_origin_height(const DisplacementFunction& d, std::uint64_t seed,
                                        double t, const Box& window, OriginQuantity q) {
  LightconeResult res;
  if (!window.contains(Site{})) throw std::invalid_argument("window must contain the origin");
  double horizon = t;
  if (q == OriginQuantity::last_arrival) {
    const auto at_origin = site_arrival_times(seed, Site{}, t);
    if (at_origin.empty()) {
      res.height = 0.0;
      res.reach = Box(window.dim(), Site{}, Site{});
      return res;
    }
    horizon = at_origin.back();  // xi_t(0) = eta_{L-}(0)
  }

  Site lo{}, hi{};
  std::vector<ConeSite> sites;
  absl::flat_hash_map<std::uint64_t, std::uint32_t> slot_of;
  // Min-heap on (time, site); the site is looked up only to break exact ties.
  auto after = [&](const Pending& a, const Pending& b) {
    if (a.time != b.time) return a.time > b.time;
    return sites[b.slot].site < sites[a.slot].site;
  };
  std::priority_queue<Pending, std::vector<Pending>, decltype(after)> heap(after);

  auto schedule_next = [&](std::uint32_t k, const Site& s, const Arrival& after) {
    auto& st = sites[k];
    while (st.cursor > 0) {
      const double rev = horizon - st.times[st.cursor - 1];
      if (arrival_before(after, {s, rev})) {
        heap.push({rev, k});
        return;
      }
      --st.cursor;
    }
  };

  auto activate = [&](const Site& z, const Arrival& after) {
    auto [it, fresh] = slot_of.try_emplace(site_key(z), static_cast<std::uint32_t>(sites.size()));
    if (!fresh) return;
    sites.emplace_back();
    auto& st = sites.back();
    st.site = z;
    st.in_window = window.contains(z);
    if (!st.in_window) {
      res.escaped = true;
      return;
    }
    for (int a = 0; a < window.dim(); ++a) {
      lo[a] = std::min(lo[a], z[a]);
      hi[a] = std::max(hi[a], z[a]);
    }
    st.times = site_arrival_times(seed, z, horizon);
    st.cursor = st.times.size();
    st.neighbours.assign(d.entries().size(), kUnresolved);
    schedule_next(it->second, z, after);
  };


  // Seed: a single particle at height 0 at the origin.
  const Arrival start{Site{}, 0.0};
  activate(Site{}, start);
  sites[slot_of.at(site_key(Site{}))].xi = 0.0;
  for (const auto& e : d.entries()) activate(Site{} - e.offset, start);

  double max_xi = 0.0;
  while (!heap.empty()) {
    const Pending p = heap.top();
    heap.pop();
    ++res.events_processed;
    const Site site = sites[p.slot].site;
    // Dual next-arrival height: max over D-entries of xi^(z + off) + D(off).
    double eta = kNegInf;
    const auto& entries = d.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      std::uint32_t slot = sites[p.slot].neighbours[k];
      if (slot == kUnresolved) {
        auto it = slot_of.find(site_key(site + entries[k].offset));
        if (it == slot_of.end()) continue;
        slot = sites[p.slot].neighbours[k] = it->second;
      }
      eta = std::max(eta, sites[slot].xi + entries[k].value);
    }
    auto& st = sites[p.slot];
    --st.cursor;
    const bool was_finite = st.xi != kNegInf;
    st.xi = eta;
    max_xi = std::max(max_xi, eta);
    const Arrival now{site, p.time};
    if (!was_finite) {
      for (const auto& e : d.entries()) activate(site - e.offset, now);
    }
    schedule_next(p.slot, site, now);
  }
  res.sites_touched = sites.size();
  res.reach = Box(window.dim(), lo, hi);
  res.height = max_xi + d.max_value();
  return res;
}

std::int32_t certified_radius(double t, const DisplacementFunction& d, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("tolerance must be in (0, 1)");
  if (t <= 0.0) return d.range();
  const double log_n = std::log(static_cast<double>(d.size()));
  const double log_eps = std::log(eps);
  const double e2 = std::numbers::e * std::numbers::e;
  for (auto y = static_cast<std::int64_t>(std::ceil(e2 * t)) + 1;; ++y) {
    const double k = static_cast<double>(y - 1);
    const double log_pmf = -t + k * std::log(t) - std::lgamma(k + 1.0);
    const double ratio = t / (k + 1.0);
    const double log_tail = log_pmf - std::log1p(-ratio);
    if (static_cast<double>(y) * log_n + log_tail < log_eps) {
      return static_cast<std::int32_t>(y) * d.range();
    }
  }
}

CertifiedHeight origin_height_certified(double t, const DisplacementFunction& d, std::uint64_t seed,
                                        double eps, OriginQuantity q) {
  CertifiedHeight out;
  if (t <= 0.0) {
    out.height = out.doubled_height = q == OriginQuantity::last_arrival ? 0.0 : d.max_value();
    out.certified = true;
    out.radius = 0;
    out.reach = Box(d.dim(), Site{}, Site{});
    return out;
  }
  out.radius = certified_radius(t, d, eps);
  const auto small = lightcone_origin_height(d, seed, t, Box::centered_radius(d.dim(), out.radius), q);
  out.height = small.height;
  out.reach = small.reach;
  if (!small.escaped) {
    // No site beyond radius R was ever reachable, so the radius-2R run replays
    // exactly the same events.
    out.doubled_height = small.height;
    out.certified = true;
    return out;
  }
  const auto big =
      lightcone_origin_height(d, seed, t, Box::centered_radius(d.dim(), 2 * out.radius), q);
  out.doubled_height = big.height;
  out.certified = big.height == small.height;
  return out;
}

}  // namespace bdlab
