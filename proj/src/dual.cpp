#include "bdlab/dual.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bdlab/csv.hpp"
#include "bdlab/rng.hpp"

namespace bdlab {

void StepPath::push(double t, double v) {
  if (!times.empty()) {
    if (t < times.back()) throw std::logic_error("step path times must not decrease");
    if (v == values.back()) return;
    if (t == times.back()) {
      values.back() = v;
      return;
    }
  }
  times.push_back(t);
  values.push_back(v);
}

double StepPath::at(double t) const {
  if (times.empty() || t < times.front()) throw std::out_of_range("step path queried before its start");
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

double StepPath::first_passage(double u) const {
  const auto it = std::find_if(values.begin(), values.end(), [u](double v) { return v >= u; });
  if (it == values.end()) throw std::out_of_range("depth " + format_double(u) + " not reached");
  return times[static_cast<std::size_t>(it - values.begin())];
}

std::vector<std::pair<double, double>> passage_table(const StepPath& depth,
                                                     const std::vector<double>& extra) {
  std::vector<double> us;
  const double top = depth.final_value();
  for (double u = 1.0; u <= top; u *= 2.0) us.push_back(u);
  for (double u : extra) {
    if (u <= top) us.push_back(u);
  }
  std::sort(us.begin(), us.end());
  us.erase(std::unique(us.begin(), us.end()), us.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(us.size());
  for (double u : us) out.emplace_back(u, depth.first_passage(u));
  return out;
}

DualTrace simulate_dual(const DisplacementFunction& d, std::uint64_t seed, const DualOptions& opt) {
  if (!std::isfinite(opt.t_max) && !std::isfinite(opt.u_max)) {
    throw std::invalid_argument("dual run needs a finite t_max or u_max");
  }
  DualTrace tr;
  tr.dim = d.dim();
  tr.delayed = opt.delayed;
  tr.lattice_interval = d.is_lattice_interval();
  Stream rng(seed, StreamTag::dual_race, 0);

  double clock = 0.0;
  tr.depth.push(0.0, opt.delayed ? 0.0 : kNegInf);
  tr.interface.push(0.0, 1.0);
  bool stopped_by_time = false;

  absl::flat_hash_map<std::uint64_t, double> xi;
  absl::flat_hash_map<std::uint64_t, std::uint32_t> active_index;
  std::vector<Site> active;

  auto xi_at = [&](const Site& s) {
    auto it = xi.find(site_key(s));
    return it == xi.end() ? kNegInf : it->second;
  };
  auto eta_at = [&](const Site& z) {
    double h = kNegInf;
    for (const auto& e : d.entries()) h = std::max(h, xi_at(z + e.offset) + e.value);
    return h;
  };
  auto activate_around = [&](const Site& y) {
    for (const auto& e : d.entries()) {
      const Site z = y - e.offset;
      if (active_index.try_emplace(site_key(z), static_cast<std::uint32_t>(active.size())).second) {
        active.push_back(z);
      }
    }
  };

  if (opt.delayed) {
    tr.kickoff = rng.exponential();
    if (tr.kickoff > opt.t_max) {
      tr.end_time = opt.t_max;
      stopped_by_time = true;
    }
    clock = tr.kickoff;
  }

  double depth = kNegInf;
  if (!stopped_by_time) {
    xi[site_key(Site{})] = 0.0;
    tr.accepted.push_back({clock, Site{}, 1});
    activate_around(Site{});
    for (const auto& z : active) depth = std::max(depth, eta_at(z));
    tr.depth.push(clock, depth);
    tr.interface.push(clock, static_cast<double>(active.size()));

    while (depth < opt.u_max) {
      if (tr.accepted.size() >= opt.max_accepted) {
        throw std::runtime_error("dual run exceeded max_accepted");
      }
      const double rate = static_cast<double>(active.size());
      const double next = clock + rng.exponential(rate);
      if (next > opt.t_max) {
        stopped_by_time = true;
        break;
      }
      clock = next;
      const Site z = active[rng.below(active.size())];
      const std::size_t prior = active.size();
      const double eta = eta_at(z);
      auto [it, fresh] = xi.try_emplace(site_key(z), eta);
      if (!fresh) it->second = eta;
      tr.accepted.push_back({clock, z, prior});
      if (fresh) activate_around(z);
      // Only next-arrival heights at z - off read the changed value.
      for (const auto& e : d.entries()) depth = std::max(depth, eta_at(z - e.offset));
      tr.depth.push(clock, depth);
      if (active.size() != prior) tr.interface.push(clock, static_cast<double>(active.size()));
    }
    tr.end_time = stopped_by_time ? opt.t_max : clock;
  }

  tr.depth.end_time = tr.interface.end_time = tr.end_time;
  tr.passage = passage_table(tr.depth, opt.u_grid);
  for (double t : opt.t_grid) {
    if (t >= 0.0 && t <= tr.end_time) tr.samples.emplace_back(t, tr.depth.at(t));
  }
  return tr;
}

double first_passage(const DualTrace& trace, double u) { return trace.depth.first_passage(u); }

std::size_t accepted_count(const DualTrace& trace, double t) {
  const auto it = std::upper_bound(trace.accepted.begin(), trace.accepted.end(), t,
                                   [](double v, const AcceptedArrival& a) { return v < a.time; });
  return static_cast<std::size_t>(it - trace.accepted.begin());
}

std::size_t accepted_until_passage(const DualTrace& trace, double u) {
  return accepted_count(trace, first_passage(trace, u));
}

SigmaTheta sigma_theta_from_sizes(const std::vector<std::size_t>& prior_sizes) {
  SigmaTheta out;
  double s3 = 0.0;
  for (std::size_t y : prior_sizes) {
    const double inv = 1.0 / static_cast<double>(y);
    out.sigma_sq += inv * inv;
    s3 += inv * inv * inv;
  }
  out.theta = (12.0 / std::numbers::e - 2.0) * s3;
  out.m = prior_sizes.size();
  return out;
}

SigmaTheta sigma_theta(const DualTrace& trace, double u) {
  const std::size_t m = accepted_until_passage(trace, u);
  std::vector<std::size_t> sizes;
  sizes.reserve(m);
  for (std::size_t j = 0; j < m; ++j) sizes.push_back(trace.accepted[j].prior);
  return sigma_theta_from_sizes(sizes);
}

double interface_after(const DualTrace& trace, std::size_t j) {
  if (j == 0) return 1.0;
  if (j < trace.accepted.size()) return static_cast<double>(trace.accepted[j].prior);
  if (j == trace.accepted.size()) return trace.interface.final_value();
  throw std::out_of_range("trace has fewer accepted arrivals than requested");
}

RenewalStats renewal_stats(const DualTrace& trace) {
  if (trace.dim != 1 || !trace.lattice_interval) {
    throw std::invalid_argument(
        "renewal statistics need d = 1 and an interval neighbourhood; other cases have no "
        "known interface asymptotics");
  }
  if (!(trace.end_time > 0.0) || trace.accepted.size() < 3) {
    throw std::invalid_argument("trace too short for renewal statistics");
  }
  RenewalStats out;
  // Least squares of I_t on t over the second half of the run.
  const int points = 401;
  const double t0 = trace.end_time / 2.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<std::pair<double, double>> xy;
  for (int i = 0; i < points; ++i) {
    const double t = t0 + (trace.end_time - t0) * i / (points - 1);
    const double y = trace.interface.at(t);
    xy.emplace_back(t, y);
    sx += t;
    sy += y;
  }
  const double mx = sx / points, my = sy / points;
  for (const auto& [t, y] : xy) {
    sxx += (t - mx) * (t - mx);
    sxy += (t - mx) * (y - my);
  }
  out.gamma = sxy / sxx;
  double rss = 0;
  for (const auto& [t, y] : xy) {
    const double r = y - my - out.gamma * (t - mx);
    rss += r * r;
  }
  out.gamma_se = std::sqrt(rss / (points - 2) / sxx);

  std::vector<double> ts;
  for (double t = 1.0; t < trace.end_time; t *= 2.0) ts.push_back(t);
  ts.push_back(trace.end_time);
  for (double t : ts) {
    out.count_ratio.emplace_back(
        t, static_cast<double>(accepted_count(trace, t)) / (out.gamma * t * t / 2.0));
  }
  std::vector<std::size_t> js;
  for (std::size_t j = 1; j <= trace.accepted.size(); j *= 2) js.push_back(j);
  for (std::size_t j = 10; j <= trace.accepted.size(); j *= 10) js.push_back(j);
  std::sort(js.begin(), js.end());
  js.erase(std::unique(js.begin(), js.end()), js.end());
  for (std::size_t j : js) {
    out.size_ratio.emplace_back(static_cast<double>(j),
                                interface_after(trace, j) /
                                    std::sqrt(2.0 * out.gamma * static_cast<double>(j)));
  }
  for (const auto& [u, tu] : trace.passage) {
    if (u < 2.0) continue;
    const auto st = sigma_theta(trace, u);
    out.sigma_ratio.emplace_back(u, st.sigma_sq / (std::log(u) / out.gamma));
  }
  return out;
}

std::string dual_accepted_csv(const DualTrace& trace) {
  static constexpr const char* axes[] = {"x", "y", "z"};
  std::vector<std::string> header{"j", "tau"};
  for (int i = 0; i < trace.dim; ++i) header.emplace_back(axes[i]);
  header.emplace_back("y_prev");
  CsvTable table(header);
  for (std::size_t j = 0; j < trace.accepted.size(); ++j) {
    const auto& a = trace.accepted[j];
    std::vector<std::string> row{cell(j + 1), cell(a.time)};
    for (int i = 0; i < trace.dim; ++i) row.push_back(cell(a.site[i]));
    row.push_back(cell(a.prior));
    table.row(std::move(row));
  }
  return table.str();
}

std::string dual_passage_csv(const DualTrace& trace) {
  CsvTable table({"u", "T"});
  for (const auto& [u, t] : trace.passage) table.row({cell(u), cell(t)});
  return table.str();
}

std::string dual_samples_csv(const DualTrace& trace) {
  CsvTable table({"t", "D", "I"});
  for (const auto& [t, dv] : trace.samples) {
    table.row({cell(t), cell(dv), cell(trace.interface.at(t))});
  }
  return table.str();
}

}  // namespace bdlab
