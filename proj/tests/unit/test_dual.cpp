#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bdlab/dual.hpp"
#include "bdlab/rng.hpp"
#include "oracle.hpp"

using namespace bdlab;

namespace {

DualOptions until_depth(double u, bool delayed) {
  DualOptions o;
  o.u_max = u;
  o.delayed = delayed;
  return o;
}

}  // namespace

TEST_CASE("step path") {
  StepPath p;
  p.push(0.0, 0.0);
  p.push(1.0, 2.0);
  p.push(1.0, 3.0);
  p.push(2.0, 3.0);
  p.push(4.0, 5.0);
  CHECK(p.times.size() == 3);
  CHECK(p.at(0.5) == 0.0);
  CHECK(p.at(1.0) == 3.0);
  CHECK(p.at(3.9) == 3.0);
  CHECK(p.first_passage(0.0) == 0.0);
  CHECK(p.first_passage(2.5) == 1.0);
  CHECK(p.first_passage(5.0) == 4.0);
  CHECK_THROWS_AS(p.first_passage(5.5), std::out_of_range);
  CHECK_THROWS(p.push(3.0, 6.0));
}

TEST_CASE("dual run needs a stop condition") {
  CHECK_THROWS_AS(simulate_dual(DisplacementFunction::nearest_neighbour(1), 1, DualOptions{}),
                  std::invalid_argument);
}

TEST_CASE("trace invariants") {
  for (bool delayed : {false, true}) {
    for (int dim = 1; dim <= 2; ++dim) {
      const auto d = DisplacementFunction::next_nearest_neighbour(dim);
      const auto tr = simulate_dual(d, 17 + dim, until_depth(40.0, delayed));
      REQUIRE(!tr.accepted.empty());
      CHECK(tr.accepted.front().prior == 1);
      CHECK(tr.accepted.front().site == Site{});
      CHECK(tr.accepted.front().time == (delayed ? tr.kickoff : 0.0));
      for (std::size_t j = 1; j < tr.accepted.size(); ++j) {
        CHECK(tr.accepted[j - 1].time < tr.accepted[j].time);
        CHECK(accepted_count(tr, tr.accepted[j].time) == j + 1);
      }
      for (std::size_t i = 1; i < tr.depth.values.size(); ++i) {
        CHECK(tr.depth.values[i - 1] < tr.depth.values[i]);
      }
      double prev = 0.0;
      for (const auto& [u, t] : tr.passage) {
        CHECK(t >= prev);
        prev = t;
        CHECK(first_passage(tr, u) == t);
      }
      CHECK(tr.depth.final_value() >= 40.0);
      CHECK(tr.end_time == first_passage(tr, 40.0));
    }
  }
}

TEST_CASE("delayed trace starts at depth zero") {
  const auto d = DisplacementFunction::nearest_neighbour(1);
  const auto tr = simulate_dual(d, 5, until_depth(3.0, true));
  CHECK(first_passage(tr, 0.0) == 0.0);
  CHECK(first_passage(tr, 0.5) == tr.kickoff);
  CHECK(first_passage(tr, 1.0) == tr.kickoff);
  const auto st = sigma_theta(tr, 1.0);
  CHECK(st.m == 1);
  CHECK(st.sigma_sq == 1.0);
  CHECK(st.theta == doctest::Approx(12.0 / std::numbers::e - 2.0));
  CHECK(st.theta == doctest::Approx(2.4146).epsilon(1e-4));
  CHECK(tr.interface.at(tr.kickoff / 2.0) == 1.0);
  CHECK(tr.interface.at(tr.kickoff) == 3.0);
}

TEST_CASE("sigma and theta from interface sizes") {
  const auto st = sigma_theta_from_sizes({1, 2, 4});
  CHECK(st.sigma_sq == 1.3125);
  CHECK(st.theta == doctest::Approx((12.0 / std::numbers::e - 2.0) * (1 + 0.125 + 1.0 / 64)));
}

TEST_CASE("trace replay: acceptance rule, interval interface and depth") {
  for (const auto& d : {DisplacementFunction::nearest_neighbour(1),
                        DisplacementFunction::from_table(1, {{site1(-2), 0.5}, {site1(-1), 0.0},
                                                             {site1(0), 1.0}, {site1(1), 2.0}})}) {
    const auto tr = simulate_dual(d, 99, until_depth(60.0, true));
    const auto dual = d.dual();
    oracle::MapField f{oracle::neg_inf, {}};
    std::int32_t lo = 0, hi = 0;
    for (std::size_t j = 0; j < tr.accepted.size(); ++j) {
      const auto& a = tr.accepted[j];
      // Interface just before the arrival, by a direct scan.
      std::size_t finite = 0;
      std::int32_t first = 1 << 20, last = -(1 << 20);
      if (j == 0) {
        finite = 1;
      } else {
        for (std::int32_t x = lo - 5; x <= hi + 5; ++x) {
          if (oracle::eta(f, site1(x), dual) != oracle::neg_inf) {
            ++finite;
            first = std::min(first, x);
            last = std::max(last, x);
          }
        }
        CHECK(static_cast<std::size_t>(last - first + 1) == finite);
        CHECK(oracle::eta(f, a.site, dual) != oracle::neg_inf);
      }
      CHECK(a.prior == finite);
      f.h[a.site] = j == 0 ? 0.0 : oracle::eta(f, a.site, dual);
      lo = std::min(lo, a.site[0]);
      hi = std::max(hi, a.site[0]);
      double depth = oracle::neg_inf;
      for (std::int32_t x = lo - 5; x <= hi + 5; ++x) depth = std::max(depth, oracle::eta(f, site1(x), dual));
      CHECK(tr.depth.at(a.time) == depth);
    }
  }
}

TEST_CASE("delayed first passage to depth one is dominated by a Gamma(2) time") {
  const auto d = DisplacementFunction::nearest_neighbour(1);
  const int n = 4000;
  std::vector<double> t1;
  for (int s = 0; s < n; ++s) t1.push_back(first_passage(simulate_dual(d, derive_seed(4, s), until_depth(1.0, true)), 1.0));
  for (double t : {0.5, 1.0, 2.0, 3.0}) {
    double exceed = 0;
    for (double v : t1) exceed += v > t;
    const double bound = std::exp(-t) * (1 + t);
    CHECK(exceed / n <= bound + 3.0 * std::sqrt(bound * (1 - bound) / n));
  }
}

TEST_CASE("renewal statistics") {
  CHECK_THROWS_AS(renewal_stats(simulate_dual(DisplacementFunction::nearest_neighbour(2), 1,
                                              until_depth(10.0, true))),
                  std::invalid_argument);
  CHECK_THROWS_AS(renewal_stats(simulate_dual(
                      DisplacementFunction::from_table(1, {{site1(0), 1.0}, {site1(2), 0.0}}), 1,
                      until_depth(10.0, true))),
                  std::invalid_argument);
  const auto tr = simulate_dual(DisplacementFunction::nearest_neighbour(1), 3, until_depth(300.0, true));
  const auto rs = renewal_stats(tr);
  CHECK(rs.gamma > 0.0);
  CHECK(rs.count_ratio.back().second == doctest::Approx(1.0).epsilon(0.2));
  CHECK(rs.size_ratio.back().second == doctest::Approx(1.0).epsilon(0.2));
  CHECK_FALSE(rs.sigma_ratio.empty());
}

TEST_CASE("trace CSV export") {
  DualOptions o;
  o.t_max = 2.0;
  o.t_grid = {0.5, 1.0, 2.0, 3.0};
  const auto tr = simulate_dual(DisplacementFunction::nearest_neighbour(1), 1, o);
  CHECK(tr.samples.size() == 3);
  CHECK(tr.end_time == 2.0);
  CHECK(dual_accepted_csv(tr).rfind("j,tau,x,y_prev\n1,0,0,1\n", 0) == 0);
  CHECK(dual_passage_csv(tr).rfind("u,T\n1,0\n", 0) == 0);
  CHECK(dual_samples_csv(tr).rfind("t,D,I\n0.5,", 0) == 0);
}
