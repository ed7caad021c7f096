#include "bdlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include "bdlab/rng.hpp"

namespace bdlab {

SampleSet::SampleSet(std::vector<double> values, SampleMeta meta)
    : sorted_(std::move(values)), meta_(std::move(meta)) {
  if (sorted_.empty()) throw std::invalid_argument("sample set must not be empty");
  for (double v : sorted_) {
    if (!std::isfinite(v)) throw std::invalid_argument("sample values must be finite");
  }
  std::sort(sorted_.begin(), sorted_.end());
  const double n = static_cast<double>(sorted_.size());
  mean_ = std::accumulate(sorted_.begin(), sorted_.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : sorted_) ss += (v - mean_) * (v - mean_);
  variance_ = sorted_.size() > 1 ? ss / (n - 1.0) : 0.0;
}

double SampleSet::mean_se() const noexcept {
  return std::sqrt(variance_ / static_cast<double>(sorted_.size()));
}

double SampleSet::variance_se() const noexcept {
  const double n = static_cast<double>(sorted_.size());
  if (n < 4) return 0.0;
  double m4 = 0.0;
  for (double v : sorted_) {
    const double d = (v - mean_) * (v - mean_);
    m4 += d * d;
  }
  m4 /= n;
  const double s4 = variance_ * variance_;
  return std::sqrt(std::max(0.0, (m4 - s4 * (n - 3.0) / (n - 1.0)) / n));
}

double SampleSet::raw_moment(int k) const noexcept {
  double s = 0.0;
  for (double v : sorted_) s += std::pow(v, k);
  return s / static_cast<double>(sorted_.size());
}

double z95() {
  static const double z = boost::math::quantile(boost::math::normal_distribution<double>(), 0.975);
  return z;
}

FitResult linear_fit(const std::vector<FitPoint>& pts) {
  if (pts.size() < 2) throw std::invalid_argument("fit needs at least two points");
  const double n = static_cast<double>(pts.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : pts) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
    syy += (p.y - my) * (p.y - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("degenerate design: all x values are equal");
  FitResult f;
  f.points = pts.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (const auto& p : pts) {
    const double r = p.y - (f.intercept + f.slope * p.x);
    rss += r * r;
  }
  f.residual_rms = std::sqrt(rss / n);
  f.r_squared = syy > 0.0 ? 1.0 - rss / syy : 1.0;
  // Propagated: slope = sum w_i y_i with w_i = (x_i - mx) / sxx.
  double var_prop = 0.0, var_int_prop = 0.0;
  for (const auto& p : pts) {
    const double w = (p.x - mx) / sxx;
    var_prop += w * w * p.se * p.se;
    const double wi = 1.0 / n - mx * w;
    var_int_prop += wi * wi * p.se * p.se;
  }
  double var_resid = 0.0, var_int_resid = 0.0;
  if (pts.size() > 2) {
    const double s2 = rss / (n - 2.0);
    var_resid = s2 / sxx;
    var_int_resid = s2 * (1.0 / n + mx * mx / sxx);
  }
  f.slope_se = std::sqrt(std::max(var_prop, var_resid));
  f.intercept_se = std::sqrt(std::max(var_int_prop, var_int_resid));
  f.slope_ci = {f.slope - z95() * f.slope_se, f.slope + z95() * f.slope_se};
  return f;
}

FitResult estimate_rate(const std::vector<std::pair<double, SampleSet>>& samples) {
  std::vector<FitPoint> pts;
  for (const auto& [scale, s] : samples) pts.push_back({scale, s.mean(), s.mean_se()});
  std::vector<double> xs;
  for (const auto& p : pts) xs.push_back(p.x);
  std::sort(xs.begin(), xs.end());
  if (std::unique(xs.begin(), xs.end()) - xs.begin() < 3) {
    throw std::invalid_argument("rate estimate needs at least three distinct scales");
  }
  return linear_fit(pts);
}

Estimate ratio_estimate(const SampleSet& s, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("scale must be positive");
  return {s.mean() / scale, s.mean_se() / scale};
}

FitResult log_slope_test(const std::vector<FitPoint>& t_and_var, double min_decades) {
  if (t_and_var.size() < 3) throw std::invalid_argument("log slope test needs at least three points");
  double lo = t_and_var.front().x, hi = lo;
  std::vector<FitPoint> pts;
  for (const auto& p : t_and_var) {
    if (!(p.x > 0.0)) throw std::invalid_argument("times must be positive");
    lo = std::min(lo, p.x);
    hi = std::max(hi, p.x);
    pts.push_back({std::log(p.x), p.y, p.se});
  }
  if (std::log10(hi / lo) < min_decades) throw std::invalid_argument("insufficient span in t");
  return linear_fit(pts);
}

double ks_statistic(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-17) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(const SampleSet& a, const SampleSet& b, std::uint64_t seed,
                       std::size_t shuffles) {
  KsResult r;
  r.statistic = ks_statistic(a.sorted(), b.sorted());
  const std::size_t na = a.size(), nb = b.size();
  if (std::min(na, nb) >= 50) {
    const double ne = static_cast<double>(na) * static_cast<double>(nb) / static_cast<double>(na + nb);
    const double sq = std::sqrt(ne);
    r.p_value = kolmogorov_q((sq + 0.12 + 0.11 / sq) * r.statistic);
    return r;
  }
  r.permutation = true;
  std::vector<double> pool(a.sorted());
  pool.insert(pool.end(), b.sorted().begin(), b.sorted().end());
  Stream rng(seed, StreamTag::permutation, 0);
  std::size_t at_least = 0;
  std::vector<double> x, y;
  for (std::size_t s = 0; s < shuffles; ++s) {
    for (std::size_t i = pool.size() - 1; i > 0; --i) std::swap(pool[i], pool[rng.below(i + 1)]);
    x.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(na));
    y.assign(pool.begin() + static_cast<std::ptrdiff_t>(na), pool.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    if (ks_statistic(x, y) >= r.statistic - 1e-12) ++at_least;
  }
  r.p_value = static_cast<double>(at_least + 1) / static_cast<double>(shuffles + 1);
  return r;
}

KsResult ks_one_sample(const SampleSet& a, const std::function<double(double)>& cdf) {
  const auto& v = a.sorted();
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  std::size_t i = 0;
  while (i < v.size()) {
    const double x = v[i];
    const std::size_t first = i;
    while (i < v.size() && v[i] == x) ++i;
    const double f = cdf(x);
    // Left limit of the hypothesised CDF is approximated by the value just below x.
    const double f_left = cdf(std::nextafter(x, -std::numeric_limits<double>::infinity()));
    d = std::max({d, std::abs(static_cast<double>(i) / n - f),
                  std::abs(static_cast<double>(first) / n - f_left)});
  }
  KsResult r;
  r.statistic = d;
  const double sq = std::sqrt(n);
  r.p_value = kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
  return r;
}

MannKendall mann_kendall(const std::vector<double>& series) {
  MannKendall mk;
  const std::size_t n = series.size();
  bool ties = false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = series[j] - series[i];
      mk.s += (d > 0) - (d < 0);
      ties = ties || d == 0.0;
    }
  }
  if (n < 2) return mk;
  if (n <= 10 && !ties) {
    // Exact null: S over all permutations, via the inversion-count recursion.
    const std::size_t max_pairs = n * (n - 1) / 2;
    std::vector<double> count{1.0};  // count[k]: permutations with k inversions
    for (std::size_t m = 2; m <= n; ++m) {
      std::vector<double> next(count.size() + m - 1, 0.0);
      for (std::size_t k = 0; k < count.size(); ++k) {
        for (std::size_t add = 0; add < m; ++add) next[k + add] += count[k];
      }
      count.swap(next);
    }
    double total = 0.0, upper = 0.0;
    for (std::size_t inv = 0; inv <= max_pairs; ++inv) {
      const double s = static_cast<double>(max_pairs) - 2.0 * static_cast<double>(inv);
      total += count[inv];
      if (s >= mk.s) upper += count[inv];
    }
    mk.p_increasing = upper / total;
    return mk;
  }
  const double nd = static_cast<double>(n);
  const double var = nd * (nd - 1.0) * (2.0 * nd + 5.0) / 18.0;
  const double z = mk.s > 0 ? (mk.s - 1.0) / std::sqrt(var) : (mk.s < 0 ? (mk.s + 1.0) / std::sqrt(var) : 0.0);
  mk.p_increasing = boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), z));
  return mk;
}

MomentCurve moment_diagnostic(const std::vector<std::pair<double, SampleSet>>& by_t, int k, double alpha) {
  if (k < 1 || k > 4) throw std::invalid_argument("moment order must be 1..4");
  MomentCurve c;
  std::vector<double> ys;
  for (const auto& [t, s] : by_t) {
    if (!(t > 0.0)) throw std::invalid_argument("times must be positive");
    const double m = s.raw_moment(k);
    const double root = m < 0.0 ? -std::pow(-m, 1.0 / k) : std::pow(m, 1.0 / k);
    const double v = (k == 1 ? m : root) / t;
    c.points.emplace_back(t, v);
    ys.push_back(v);
  }
  c.trend = mann_kendall(ys);
  c.bounded = c.trend.p_increasing >= alpha;
  return c;
}

ExponentFit exponent_fit(const std::vector<WidthRow>& table) {
  if (table.empty()) throw std::invalid_argument("empty width table");
  double n_max = 0.0, t_max = 0.0;
  for (const auto& r : table) {
    n_max = std::max(n_max, r.n);
    t_max = std::max(t_max, r.t);
  }
  std::vector<FitPoint> beta, alpha;
  for (const auto& r : table) {
    if (!(r.width > 0.0)) continue;
    if (r.n == n_max && r.t <= r.n) beta.push_back({std::log(r.t), std::log(r.width), 0.0});
    if (r.t == t_max && r.t >= r.n) alpha.push_back({std::log(r.n), std::log(r.width), 0.0});
  }
  if (beta.size() < 3 || alpha.size() < 3) throw std::invalid_argument("regime coverage insufficient");
  return {linear_fit(beta), linear_fit(alpha)};
}

std::string verdicts_json(const std::vector<Verdict>& verdicts) {
  auto num = [](double v) -> nlohmann::ordered_json {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  };
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& v : verdicts) {
    nlohmann::ordered_json j;
    j["check"] = v.check;
    j["statistic"] = num(v.statistic);
    j["threshold"] = num(v.threshold);
    j["pass"] = v.pass;
    if (!v.detail.empty()) j["detail"] = v.detail;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

}  // namespace bdlab
