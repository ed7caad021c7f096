#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace bdlab {

struct SampleMeta {
  std::string model;
  double scale = 0.0;  ///< t or u
  std::uint64_t master_seed = 0;
};

/// Nonempty sample of finite values. Moments are computed from the sorted
/// values, so they do not depend on the order in which values arrived.
class SampleSet {
 public:
  /// Throws std::invalid_argument when empty or when a value is not finite.
  explicit SampleSet(std::vector<double> values, SampleMeta meta = {});

  const std::vector<double>& sorted() const noexcept { return sorted_; }
  const SampleMeta& meta() const noexcept { return meta_; }
  std::size_t size() const noexcept { return sorted_.size(); }
  double mean() const noexcept { return mean_; }
  /// Unbiased sample variance (0 for a single value).
  double variance() const noexcept { return variance_; }
  /// Standard error of the mean.
  double mean_se() const noexcept;
  /// Standard error of the sample variance, sqrt((m4 - s^4 (n-3)/(n-1)) / n).
  double variance_se() const noexcept;
  /// Raw moment E[X^k].
  double raw_moment(int k) const noexcept;

 private:
  std::vector<double> sorted_;
  SampleMeta meta_;
  double mean_ = 0.0;
  double variance_ = 0.0;
};

/// Mergeable accumulator for parallel reduction: keeps every value, so merged
/// results are identical whatever the merge order.
class Accumulator {
 public:
  void add(double v) { values_.push_back(v); }
  void merge(const Accumulator& other) {
    values_.insert(values_.end(), other.values_.begin(), other.values_.end());
  }
  std::size_t count() const noexcept { return values_.size(); }
  SampleSet finish(SampleMeta meta = {}) const { return SampleSet(values_, std::move(meta)); }

 private:
  std::vector<double> values_;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const noexcept { return lo <= v && v <= hi; }
  bool excludes_zero() const noexcept { return lo > 0.0 || hi < 0.0; }
  bool overlaps(const Interval& o) const noexcept { return lo <= o.hi && o.lo <= hi; }
};

/// 97.5% standard normal quantile used for every 95% interval.
double z95();

struct Estimate {
  double value = 0.0;
  double se = 0.0;
  Interval ci95() const noexcept { return {value - z95() * se, value + z95() * se}; }
};

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double intercept_se = 0.0;
  Interval slope_ci;
  double residual_rms = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

struct FitPoint {
  double x = 0.0;
  double y = 0.0;
  double se = 0.0;  ///< standard error of y (0 if unknown)
};

/// Ordinary least squares of y on x. The slope SE is the larger of the
/// residual-based SE and the SE propagated from the per-point SEs.
/// Throws std::invalid_argument for fewer than 2 points or equal x values.
FitResult linear_fit(const std::vector<FitPoint>& pts);

/// Fits value = slope * scale + intercept over replicate means; the CI comes
/// from replicate-level standard errors. Needs >= 3 distinct scales.
FitResult estimate_rate(const std::vector<std::pair<double, SampleSet>>& samples);

/// mean(X) / scale with its standard error.
Estimate ratio_estimate(const SampleSet& s, double scale);

/// Regresses variance estimates on log t. Needs >= 3 points whose t values
/// span at least `min_decades` decades (std::invalid_argument otherwise).
FitResult log_slope_test(const std::vector<FitPoint>& t_and_var, double min_decades = 1.5);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool permutation = false;  ///< p from a permutation test (small samples)
};

/// sup |F_a - F_b| with right-continuous empirical CDFs.
double ks_statistic(const std::vector<double>& sorted_a, const std::vector<double>& sorted_b);

/// Survival function of the Kolmogorov distribution, P[K > lambda].
double kolmogorov_q(double lambda);

/// Two-sample KS test: asymptotic p-value, or a 10^4-shuffle permutation test
/// when either sample has fewer than 50 values.
KsResult ks_two_sample(const SampleSet& a, const SampleSet& b, std::uint64_t seed = 0,
                       std::size_t shuffles = 10'000);

/// One-sample KS test against a CDF. For a discrete null the statistic is
/// evaluated at the jump points and the asymptotic p-value is conservative.
KsResult ks_one_sample(const SampleSet& a, const std::function<double(double)>& cdf);

struct MannKendall {
  double s = 0.0;
  double p_increasing = 1.0;  ///< one-sided p for an increasing trend
};

/// Mann-Kendall trend test: exact null distribution for n <= 10 without ties,
/// normal approximation otherwise.
MannKendall mann_kendall(const std::vector<double>& series);

struct MomentCurve {
  std::vector<std::pair<double, double>> points;  ///< (t, E[X^k]^{1/k} / t)
  MannKendall trend;
  bool bounded = false;  ///< no increasing trend at alpha = 0.05
};

/// Needs 1 <= k <= 4.
MomentCurve moment_diagnostic(const std::vector<std::pair<double, SampleSet>>& by_t, int k,
                              double alpha = 0.05);

struct WidthRow {
  double t = 0.0;
  double n = 0.0;
  double width = 0.0;  ///< W_{t,n}
};

struct ExponentFit {
  FitResult beta;   ///< log W on log t at the largest n, rows with t <= n
  FitResult alpha;  ///< log W on log n at the largest t, rows with n <= t
};

/// Growth and roughness exponents from a (t, n) width table. Throws
/// std::invalid_argument when either regime has fewer than 3 points.
ExponentFit exponent_fit(const std::vector<WidthRow>& table);

struct Verdict {
  std::string check;
  double statistic = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string detail;
};

std::string verdicts_json(const std::vector<Verdict>& verdicts);

}  // namespace bdlab
