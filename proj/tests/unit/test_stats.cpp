#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <json.hpp>

#include "bdlab/dual.hpp"
#include "bdlab/lattice.hpp"
#include "bdlab/rng.hpp"
#include "bdlab/stats.hpp"

using namespace bdlab;

namespace {

SampleSet normal_sample(std::mt19937_64& gen, std::size_t n, double mu = 0.0, double sd = 1.0) {
  std::normal_distribution<double> dist(mu, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(gen);
  return SampleSet(v);
}

}  // namespace

TEST_CASE("sample sets") {
  CHECK_THROWS_AS(SampleSet({}), std::invalid_argument);
  CHECK_THROWS_AS(SampleSet({1.0, kNegInf}), std::invalid_argument);
  const SampleSet s({3.0, 1.0, 2.0, 6.0});
  CHECK(s.sorted() == std::vector<double>{1.0, 2.0, 3.0, 6.0});
  CHECK(s.mean() == 3.0);
  CHECK(s.variance() == doctest::Approx(14.0 / 3.0));
  CHECK(s.raw_moment(2) == doctest::Approx(50.0 / 4.0));
  Accumulator a, b;
  a.add(3.0);
  a.add(1.0);
  b.add(2.0);
  b.add(6.0);
  Accumulator ab = a, ba = b;
  ab.merge(b);
  ba.merge(a);
  CHECK(ab.finish().mean() == ba.finish().mean());
  CHECK(ab.finish().variance() == ba.finish().variance());
  CHECK(ab.finish().sorted() == s.sorted());
}

TEST_CASE("variance standard error is close to the normal-theory value") {
  std::mt19937_64 gen(2);
  const auto s = normal_sample(gen, 20000, 0.0, 2.0);
  CHECK(s.variance() == doctest::Approx(4.0).epsilon(0.05));
  CHECK(s.variance_se() == doctest::Approx(4.0 * std::sqrt(2.0 / 20000)).epsilon(0.1));
}

TEST_CASE("KS two-sample basics") {
  std::mt19937_64 gen(3);
  const auto a = normal_sample(gen, 500);
  const auto same = ks_two_sample(a, a);
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == 1.0);
  std::vector<double> shifted(a.sorted());
  for (auto& v : shifted) v += 10.0;
  const auto far = ks_two_sample(a, SampleSet(shifted));
  CHECK(far.statistic == 1.0);
  CHECK(far.p_value < 1e-12);

  const auto b = normal_sample(gen, 700, 0.1);
  const auto ab = ks_two_sample(a, b);
  const auto ba = ks_two_sample(b, a);
  CHECK(ab.statistic == ba.statistic);
  CHECK(ab.p_value == ba.p_value);
  // Invariance under a common strictly increasing transform.
  std::vector<double> ea, eb;
  for (double v : a.sorted()) ea.push_back(std::exp(v) * 3 + 1);
  for (double v : b.sorted()) eb.push_back(std::exp(v) * 3 + 1);
  CHECK(ks_two_sample(SampleSet(ea), SampleSet(eb)).statistic == ab.statistic);

  // Ties: right-continuous ECDFs.
  CHECK(ks_statistic({1, 1, 2}, {1, 2, 2}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("Kolmogorov survival function") {
  CHECK(kolmogorov_q(0.0) == 1.0);
  CHECK(kolmogorov_q(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(kolmogorov_q(1.6276) == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(kolmogorov_q(3.0) < 1e-7);
}

TEST_CASE("KS p-values are calibrated under the null") {
  std::mt19937_64 gen(4);
  int rejections = 0;
  const int trials = 400;
  for (int i = 0; i < trials; ++i) {
    rejections += ks_two_sample(normal_sample(gen, 300), normal_sample(gen, 300)).p_value < 0.05;
  }
  // Asymptotic p-values are slightly conservative; allow a generous band.
  CHECK(rejections < 0.05 * trials + 3 * std::sqrt(0.05 * 0.95 * trials));
  CHECK(rejections > 0);
}

TEST_CASE("KS permutation test for small samples") {
  std::mt19937_64 gen(5);
  const auto a = normal_sample(gen, 20);
  const auto b = normal_sample(gen, 30);
  const auto r = ks_two_sample(a, b, 1);
  CHECK(r.permutation);
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value <= 1.0);
  CHECK(r.p_value == ks_two_sample(a, b, 1).p_value);
  std::vector<double> shifted(a.sorted());
  for (auto& v : shifted) v += 5.0;
  CHECK(ks_two_sample(a, SampleSet(shifted), 1).p_value < 1e-3);
  const auto same = ks_two_sample(a, a, 1);
  CHECK(same.p_value == 1.0);
}

TEST_CASE("one-sample KS on a Poisson null") {
  std::mt19937_64 gen(6);
  std::poisson_distribution<int> po(3.0);
  std::vector<double> v(5000);
  for (auto& x : v) x = po(gen);
  const boost::math::poisson_distribution<double> null(3.0);
  auto cdf = [&](double x) { return x < 0 ? 0.0 : boost::math::cdf(null, std::floor(x)); };
  CHECK(ks_one_sample(SampleSet(v), cdf).p_value > 0.01);
  const boost::math::poisson_distribution<double> wrong(3.3);
  auto cdf_wrong = [&](double x) { return x < 0 ? 0.0 : boost::math::cdf(wrong, std::floor(x)); };
  CHECK(ks_one_sample(SampleSet(v), cdf_wrong).p_value < 0.01);
}

TEST_CASE("linear fits and rate estimates") {
  std::vector<FitPoint> exact;
  for (double x : {1.0, 2.0, 5.0, 9.0}) exact.push_back({x, 0.7 * x - 2.0, 0.0});
  const auto f = linear_fit(exact);
  CHECK(f.slope == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(f.intercept == doctest::Approx(-2.0).epsilon(1e-14));
  CHECK(f.slope_ci.contains(f.slope));
  CHECK_THROWS_AS(linear_fit({{1, 1, 0}, {1, 2, 0}}), std::invalid_argument);

  std::mt19937_64 gen(7);
  std::vector<std::pair<double, SampleSet>> rs, scaled;
  for (double t : {25.0, 50.0, 100.0}) {
    const auto s = normal_sample(gen, 2000, 0.6 * t, std::sqrt(t));
    rs.emplace_back(t, s);
    std::vector<double> v(s.sorted());
    for (auto& x : v) x *= 3.0;
    scaled.emplace_back(t, SampleSet(v));
  }
  const auto rate = estimate_rate(rs);
  CHECK(rate.slope_ci.contains(0.6));
  CHECK(rate.slope_ci.excludes_zero());
  CHECK(rate.slope_ci.hi - rate.slope_ci.lo > 0.0);
  CHECK(estimate_rate(scaled).slope == doctest::Approx(3.0 * rate.slope).epsilon(1e-12));
  CHECK_THROWS_AS(estimate_rate({rs[0], rs[0], rs[1]}), std::invalid_argument);
  const auto r = ratio_estimate(rs[2].second, 100.0);
  CHECK(r.ci95().contains(0.6));
}

TEST_CASE("log slope recovery") {
  std::mt19937_64 gen(8);
  int covered = 0;
  const int trials = 40;
  for (int k = 0; k < trials; ++k) {
    std::vector<FitPoint> pts;
    for (double t = 8; t <= 512; t *= 2) {
      // Variance of a normal sample whose true variance is 1 + 0.5 log t.
      const auto s = normal_sample(gen, 2000, 0.0, std::sqrt(1.0 + 0.5 * std::log(t)));
      pts.push_back({t, s.variance(), s.variance_se()});
    }
    const auto f = log_slope_test(pts);
    covered += f.slope_ci.contains(0.5);
    CHECK(f.slope_ci.excludes_zero());
  }
  CHECK(covered >= trials * 0.85);
  std::vector<FitPoint> exact;
  for (double t : {1.0, 10.0, 100.0}) exact.push_back({t, 2 * std::log(t) + 1, 0.0});
  CHECK(log_slope_test(exact).slope == doctest::Approx(2.0));
  CHECK_THROWS_AS(log_slope_test({{1, 0, 0}, {2, 0, 0}, {3, 0, 0}}), std::invalid_argument);
}

TEST_CASE("Mann-Kendall") {
  CHECK(mann_kendall({1, 2, 3, 4}).s == 6);
  CHECK(mann_kendall({1, 2, 3, 4}).p_increasing == doctest::Approx(1.0 / 24));
  CHECK(mann_kendall({4, 3, 2, 1}).p_increasing == 1.0);
  CHECK(mann_kendall({1, 3, 2, 4}).p_increasing == doctest::Approx(4.0 / 24));
  std::vector<double> up;
  for (int i = 0; i < 30; ++i) up.push_back(i + (i % 3) * 0.5);
  CHECK(mann_kendall(up).p_increasing < 1e-6);
}

TEST_CASE("moment diagnostic") {
  std::vector<std::pair<double, SampleSet>> by_t;
  for (double t : {10.0, 20.0, 40.0, 80.0}) by_t.emplace_back(t, SampleSet({t, t, t}));
  const auto one = moment_diagnostic(by_t, 1);
  for (const auto& [t, v] : one.points) CHECK(v == 1.0);
  CHECK(one.bounded);
  std::vector<std::pair<double, SampleSet>> constant;
  for (double t : {10.0, 20.0, 40.0, 80.0}) constant.emplace_back(t, SampleSet({5.0, 5.0}));
  const auto c = moment_diagnostic(constant, 4);
  for (std::size_t i = 1; i < c.points.size(); ++i) CHECK(c.points[i].second < c.points[i - 1].second);
  CHECK(c.bounded);
  std::vector<std::pair<double, SampleSet>> growing;
  for (double t : {10.0, 20.0, 40.0, 80.0}) growing.emplace_back(t, SampleSet({t * t}));
  CHECK_FALSE(moment_diagnostic(growing, 2).bounded);
  CHECK_THROWS_AS(moment_diagnostic(by_t, 5), std::invalid_argument);

  // k = 1 is the plain mean curve.
  std::mt19937_64 gen(9);
  std::vector<std::pair<double, SampleSet>> noisy;
  for (double t : {10.0, 20.0}) noisy.emplace_back(t, normal_sample(gen, 100, t, 1.0));
  const auto m1 = moment_diagnostic(noisy, 1);
  CHECK(m1.points[1].second == doctest::Approx(noisy[1].second.mean() / 20.0));
}

TEST_CASE("exponent fit recovers synthetic exponents") {
  std::vector<WidthRow> table;
  for (double n : {64.0, 128.0, 256.0, 1024.0}) {
    for (double t : {2.0, 4.0, 8.0, 16.0, 4096.0}) {
      const double w = t == 4096.0 ? std::sqrt(n) : std::cbrt(t);
      table.push_back({t, n, w});
    }
  }
  const auto e = exponent_fit(table);
  CHECK(e.beta.slope == doctest::Approx(1.0 / 3.0).epsilon(0.2));
  CHECK(e.alpha.slope == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(exponent_fit({{1, 1, 1}}), std::invalid_argument);
}

TEST_CASE("verdict JSON") {
  const auto js = verdicts_json({{"a", 0.5, 0.01, true, ""}, {"b", kNegInf, 1.0, false, "x"}});
  const auto j = nlohmann::json::parse(js);
  REQUIRE(j.size() == 2);
  CHECK(j[0]["check"] == "a");
  CHECK(j[0]["pass"] == true);
  CHECK(j[1]["statistic"] == "-inf");
  CHECK(j[1]["detail"] == "x");
}

TEST_CASE("certified origin heights match a much larger window in law") {
  // NNN(1), t = 5: certified heights against heights on a window four times
  // the certified radius, independent seeds.
  const auto d = DisplacementFunction::next_nearest_neighbour(1);
  const std::int32_t big = 4 * certified_radius(5.0, d, 1e-9);
  std::vector<double> a, b;
  for (int s = 0; s < 2000; ++s) {
    a.push_back(origin_height_certified(5.0, d, derive_seed(101, s)).height);
    b.push_back(lightcone_origin_height(d, derive_seed(202, s), 5.0, Box::centered_radius(1, big),
                                        OriginQuantity::last_arrival)
                    .height);
  }
  CHECK(ks_two_sample(SampleSet(a), SampleSet(b)).p_value > 0.001);
}

TEST_CASE("race-based dual matches the dual of explicit Poisson arrivals in law") {
  // NN(1), t = 5: the dual simulator thins a rate-|A| race; replaying the
  // dual on a fully generated arrival field must give the same depth law.
  const auto d = DisplacementFunction::nearest_neighbour(1);
  std::vector<double> race, explicit_field;
  DualOptions o;
  o.t_max = 5.0;
  for (int s = 0; s < 2000; ++s) {
    race.push_back(simulate_dual(d, derive_seed(303, s), o).depth.at(5.0));
    explicit_field.push_back(replay_dual_depth(generate_arrivals(Box::centered_radius(1, certified_radius(5.0, d, 1e-9)), 5.0, derive_seed(404, s)), d));
  }
  CHECK(ks_two_sample(SampleSet(race), SampleSet(explicit_field)).p_value > 0.001);
}
