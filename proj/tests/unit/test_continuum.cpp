#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/distributions/poisson.hpp>

#include "bdlab/continuum.hpp"
#include "bdlab/csv.hpp"

using namespace bdlab;

namespace {

Point pt(double a, double b = 0.0) { return Point{a, b, 0.0}; }

MarkedPoint mp(Point x, double time, double r) { return MarkedPoint{x, time, r}; }

// Tiny instance with at most `cap` points below t.
std::vector<MarkedPoint> tiny_points(std::mt19937_64& gen, int dim, const Box& cells, double t,
                                     const RadiusLaw& law, std::size_t cap) {
  while (true) {
    auto pts = generate_marked_poisson(cells, t, law, gen());
    if (pts.size() <= cap && !pts.empty()) return pts;
  }
}

}  // namespace

TEST_CASE("radius laws") {
  Stream rng(1);
  const auto f = RadiusLaw::fixed(0.25);
  CHECK(f.r_max() == 0.25);
  for (int i = 0; i < 100; ++i) CHECK(f.sample(rng) == 0.25);
  const auto u = parse_radius_law("uniform:0.1:0.3");
  CHECK(u.r_max() == 0.3);
  for (int i = 0; i < 1000; ++i) {
    const double r = u.sample(rng);
    CHECK(r > 0.1);
    CHECK(r <= 0.3);
  }
  const auto d = parse_radius_law("discrete:0.1=1,0.25=3");
  CHECK(d.r_max() == 0.25);
  int small = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) small += d.sample(rng) == 0.1;
  CHECK(std::abs(small / double(n) - 0.25) < 4.0 * std::sqrt(0.25 * 0.75 / n));
  CHECK(parse_radius_law("fixed:0.5").describe() == "fixed:0.5");
  CHECK(d.describe() == "discrete:0.1=0.25,0.25=0.75");
  CHECK_THROWS_AS(parse_radius_law("fixed:0"), std::invalid_argument);
  CHECK_THROWS_AS(parse_radius_law("uniform:0.3:0.1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_radius_law("gamma:1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_radius_law("fixed:x"), std::invalid_argument);
}

TEST_CASE("marked Poisson points") {
  const auto law = RadiusLaw::fixed(0.25);
  CHECK(generate_marked_poisson(Box::centered_radius(1, 3), 0.0, law, 1).empty());

  const Box unit_square(2, Site{}, Site{});
  const int seeds = 4000;
  double sum = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const auto pts = generate_marked_poisson(unit_square, 10.0, law, derive_seed(3, s));
    sum += static_cast<double>(pts.size());
    for (const auto& p : pts) {
      CHECK(p.radius == 0.25);
      CHECK(p.time > 0.0);
      CHECK(p.time < 10.0);
      CHECK(p.x[0] >= 0.0);
      CHECK(p.x[0] < 1.0);
      CHECK(p.x[1] >= 0.0);
      CHECK(p.x[1] < 1.0);
      CHECK(p.x[2] == 0.0);
    }
  }
  CHECK(std::abs(sum / seeds - 10.0) < 3.0 * std::sqrt(10.0 / seeds));

  // Sorted by time; a cell's points do not depend on the region or the horizon.
  const auto big = generate_marked_poisson(Box::centered_radius(1, 6), 4.0, law, 9);
  CHECK(std::is_sorted(big.begin(), big.end(),
                       [](const MarkedPoint& a, const MarkedPoint& b) { return a.time < b.time; }));
  const auto cell = cell_points(9, site1(2), 1, 4.0, law);
  std::size_t in_cell = 0;
  for (const auto& p : big) in_cell += p.x[0] >= 2.0 && p.x[0] < 3.0;
  CHECK(in_cell == cell.size());
  const auto shorter = cell_points(9, site1(2), 1, 2.0, law);
  REQUIRE(shorter.size() <= cell.size());
  for (std::size_t i = 0; i < shorter.size(); ++i) CHECK(shorter[i].x == cell[i].x);

  const auto rev = reverse_points(big, 4.0);
  REQUIRE(rev.size() == big.size());
  CHECK(reverse_points(rev, 4.0).size() == big.size());
  for (std::size_t i = 0; i < big.size(); ++i) CHECK(reverse_points(rev, 4.0)[i].time == big[i].time);
}

TEST_CASE("drop geometry examples") {
  Agglomeration agg(1, 1.0, AggregateMode::forward);
  CHECK(agg.contact_height(pt(0.3), 1.0) == 1.0);
  CHECK(agg.height_at(pt(0.0)) == 0.0);
  REQUIRE(agg.drop(mp(pt(0.0), 1.0, 1.0)));
  CHECK(agg.balls()[0].z == 1.0);
  CHECK(agg.contact_height(pt(0.0), 1.0) == 3.0);
  CHECK(*agg.contact_height(pt(1.2), 1.0) == doctest::Approx(2.6).epsilon(1e-15));
  CHECK(agg.contact_height(pt(2.0), 1.0) == 1.0);  // tangent contact does not count
  CHECK(agg.height_at(pt(0.0)) == 2.0);
  CHECK(agg.height_at(pt(1.0)) == 1.0);
  CHECK(agg.height_at(pt(-1.0)) == 1.0);
  CHECK(agg.height_at(pt(1.5)) == 0.0);
  CHECK(agg.depth() == 2.0);
}

TEST_CASE("dual agglomeration: the seed is a single point") {
  Agglomeration agg(1, 0.25, AggregateMode::dual);
  CHECK(agg.depth() == 0.0);
  CHECK(agg.height_at(pt(0.0)) == 0.0);
  CHECK(agg.height_at(pt(0.1)) == kNegInf);
  CHECK_FALSE(agg.drop(mp(pt(0.3), 1.0, 0.25)));
  CHECK(agg.balls().empty());
  REQUIRE(agg.drop(mp(pt(0.25), 1.0, 0.25)));
  CHECK(agg.balls()[0].z == 0.0);
  CHECK(agg.depth() == 0.25);
  // Now contact with that ball is possible further out.
  CHECK(agg.drop(mp(pt(0.7), 2.0, 0.25)));
  CHECK(agg.height_at(pt(0.7)) > 0.25);
  CHECK(agg.height_at(pt(-0.2)) == kNegInf);
}

TEST_CASE("indexed contact and height equal the full scan") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 1 + trial % 3;
    const auto law = trial % 2 ? RadiusLaw::uniform(0.05, 0.4) : RadiusLaw::fixed(0.25);
    const Box cells = Box::centered_radius(dim, dim == 3 ? 1 : 3);
    const double t = dim == 1 ? 30.0 : 6.0;
    const auto pts = generate_marked_poisson(cells, t, law, gen());
    for (auto mode : {AggregateMode::forward, AggregateMode::dual}) {
      Agglomeration agg(dim, law.r_max(), mode);
      for (const auto& p : pts) {
        CHECK(agg.contact_height(p.x, p.radius) == agg.contact_height_bruteforce(p.x, p.radius));
        const auto id = agg.drop(p);
        if (mode == AggregateMode::forward) {
          REQUIRE(id);
          CHECK(agg.balls()[*id].z >= p.radius);
        }
      }
      std::uniform_real_distribution<double> coord(-3.5, 4.5);
      for (int k = 0; k < 200; ++k) {
        Point x{};
        for (int a = 0; a < dim; ++a) x[static_cast<std::size_t>(a)] = coord(gen);
        CHECK(agg.height_at(x) == agg.height_at_bruteforce(x));
      }
      for (const auto& b : agg.balls()) CHECK(agg.height_at(b.x) == agg.height_at_bruteforce(b.x));
    }
  }
}

TEST_CASE("empty and trivial path enumeration") {
  CHECK(enumerate_continuum_paths({}, 1.0, pt(0.0), 1).empty());
  CHECK(max_continuum_path_height({}, 1.0, pt(0.0), 1) == 0.0);
  const std::vector<MarkedPoint> one{mp(pt(0.1), 0.5, 0.25)};
  const auto paths = enumerate_continuum_paths(one, 1.0, pt(0.0), 1);
  REQUIRE(paths.size() == 1);
  CHECK(paths[0].height == 0.25 + std::sqrt(0.25 * 0.25 - 0.01));
  CHECK(enumerate_continuum_paths(one, 1.0, pt(0.5), 1).empty());
  CHECK(enumerate_continuum_paths(one, 0.5, pt(0.0), 1).empty());
  std::vector<MarkedPoint> many;
  for (int i = 0; i < 13; ++i) many.push_back(mp(pt(0.0), 0.1 * (i + 1), 0.25));
  CHECK_THROWS_AS(enumerate_continuum_paths(many, 2.0, pt(0.0), 1), std::length_error);
  const auto stack = enumerate_continuum_paths(many, 2.0, pt(0.0), 1, 13);
  CHECK(stack.size() == (1u << 13) - 1);
  double best = 0.0;
  for (const auto& p : stack) best = std::max(best, p.height);
  CHECK(best == 13 * 0.5);
}

TEST_CASE("engine heights equal the maximum path height") {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 1 + trial % 2;
    const auto law = trial % 3 == 0 ? RadiusLaw::fixed(0.3) : RadiusLaw::uniform(0.15, 0.6);
    const Box cells = dim == 1 ? Box::centered_side(1, 2) : Box(2, Site{}, Site{});
    const double t = dim == 1 ? 2.5 : 5.0;
    const auto pts = tiny_points(gen, dim, cells, t, law, 12);
    const auto agg = deposit_all(pts, dim, law.r_max(), AggregateMode::forward);
    std::vector<Point> xs = midpoint_grid(cells, dim == 1 ? 16 : 4);
    for (const auto& p : pts) xs.push_back(p.x);
    for (const auto& x : xs) {
      const double h = agg.height_at(x);
      const auto paths = enumerate_continuum_paths(pts, t, x, dim);
      double best = 0.0;
      for (const auto& p : paths) {
        best = std::max(best, p.height);
        CHECK(std::abs(p.height - path_height_at(pts, p.points, x, dim)) <= 1e-12);
      }
      CHECK(std::abs(best - h) <= 1e-9);
    }
  }
}

TEST_CASE("midpoint integrals") {
  // One resting ball of radius r in the unit cell [0, 1): the profile is
  // r + sqrt(r^2 - (x - c)^2) on the footprint, so the integral is 2 r^2 + pi r^2 / 2.
  const double r = 0.25;
  Agglomeration agg(1, r, AggregateMode::forward);
  agg.drop(mp(pt(0.5), 1.0, r));
  const Box cell(1, Site{}, Site{});
  const double exact = 2 * r * r + std::numbers::pi * r * r / 2;
  const double exact_sq = [&] {
    // int (r + s)^2 over the chord, s = sqrt(r^2 - u^2): 2 r^3 + pi r^3 + 4 r^3 / 3.
    return 2 * r * r * r + std::numbers::pi * r * r * r + 4.0 * r * r * r / 3.0;
  }();
  const auto w = mean_and_width(agg, cell, r / 8);
  CHECK(w.h == 1.0 / 32);
  CHECK(std::abs(w.mean - exact) < 5e-3);
  CHECK(std::abs(w.mean_half - exact) < std::abs(w.mean - exact));
  CHECK(std::abs(w.width_sq - (exact_sq - exact * exact)) < 5e-3);
  CHECK(std::abs(w.width_sq_half - (exact_sq - exact * exact)) < std::abs(w.width_sq - (exact_sq - exact * exact)));

  // Empty profile: (0, 0). Large box: both shrink with the support fraction.
  const auto empty = mean_and_width(Agglomeration(1, r, AggregateMode::forward), cell, 0.1);
  CHECK(empty.mean == 0.0);
  CHECK(empty.width_sq == 0.0);
  const auto wide = mean_and_width(agg, Box::centered_radius(1, 50), r / 8);
  CHECK(wide.mean == doctest::Approx(exact / 101).epsilon(0.02));
  CHECK(wide.width_sq < w.width_sq / 50);
  CHECK(midpoint_grid(Box::centered_radius(2, 1), 2).size() == 36);
  CHECK(midpoint_grid(cell, 4).front()[0] == 0.125);
}

TEST_CASE("continuum duality per realization") {
  const auto law = RadiusLaw::fixed(0.25);
  for (int dim = 1; dim <= 2; ++dim) {
    for (int s = 0; s < (dim == 1 ? 40 : 6); ++s) {
      const auto rep = continuum_duality_check(dim == 1 ? 5.0 : 2.0, dim, law, derive_seed(dim, s));
      CHECK(rep.certified);
      CHECK(rep.agree);
      CHECK(rep.forward >= 0.0);
    }
  }
  for (int s = 0; s < 20; ++s) {
    const auto rep = continuum_duality_check(4.0, 1, RadiusLaw::uniform(0.1, 0.4), derive_seed(9, s));
    CHECK(rep.agree);
  }
}

TEST_CASE("light cone on off-centre windows matches the forward engine") {
  const auto law = RadiusLaw::uniform(0.1, 0.3);
  for (int s = 0; s < 30; ++s) {
    const Box cells(1, site1(-2), site1(4));
    const auto cone = continuum_lightcone_height(1, law, derive_seed(31, s), 6.0, cells);
    const auto fwd = simulate_continuum(cells, 6.0, law, derive_seed(31, s));
    CHECK(std::abs(cone.height - fwd.height_at(Point{})) <= 1e-9);
    CHECK(cone.balls <= fwd.balls().size());
  }
}

TEST_CASE("certified height does not depend on the window") {
  const auto law = RadiusLaw::fixed(0.25);
  for (int s = 0; s < 20; ++s) {
    const auto c = continuum_height_certified(8.0, 1, law, derive_seed(41, s));
    CHECK(c.certified);
    const auto wider = continuum_lightcone_height(1, law, derive_seed(41, s), 8.0,
                                                  Box::centered_radius(1, 4 * c.radius));
    CHECK_FALSE(wider.escaped);
    CHECK(wider.height == c.height);
  }
  CHECK(continuum_certified_radius(5.0, 1, 0.25, 1e-9) > continuum_certified_radius(1.0, 1, 0.25, 1e-9));
  CHECK(continuum_certified_radius(5.0, 1, 0.25, 1e-12) >= continuum_certified_radius(5.0, 1, 0.25, 1e-6));
}

TEST_CASE("coupling to the NNN lattice") {
  const auto law = RadiusLaw::fixed(0.25);
  for (int dim = 1; dim <= 2; ++dim) {
    for (int s = 0; s < 10; ++s) {
      const auto rep = lattice_coupling(Box::centered_radius(dim, dim == 1 ? 10 : 3), 5.0, law,
                                        derive_seed(51 + dim, s), 8);
      CHECK(rep.violations == 0);
      CHECK(rep.max_excess <= 0.0);
      CHECK(rep.grid_points > 0);
    }
  }
}

TEST_CASE("dual continuum trace") {
  const auto law = RadiusLaw::fixed(0.25);
  CHECK_THROWS_AS(simulate_dual_continuum(1, law, 1, {}), std::invalid_argument);
  for (int dim = 1; dim <= 2; ++dim) {
    ContinuumDualOptions o;
    o.u_max = 6.0;
    o.t_grid = {0.5, 1.0, 2.0};
    const auto tr = simulate_dual_continuum(dim, law, derive_seed(61, dim), o);
    REQUIRE(!tr.accepted.empty());
    // The first ball must reach the seed point.
    CHECK(std::abs(tr.accepted[0].x[0]) <= 0.25 + 1e-15);
    CHECK(tr.proposals >= tr.accepted.size());
    Agglomeration replay(dim, 0.25, AggregateMode::dual);
    double lo = 0.0, hi = 0.0;
    for (std::size_t j = 0; j < tr.accepted.size(); ++j) {
      const auto& a = tr.accepted[j];
      if (j) CHECK(tr.accepted[j - 1].time < a.time);
      if (dim == 1) {
        CHECK(a.prior == hi - lo);
      } else {
        CHECK(std::isnan(a.prior));
      }
      REQUIRE(replay.drop({a.x, a.time, a.radius}));
      CHECK(tr.depth.at(a.time) == replay.depth());
      lo = std::min(lo, a.x[0] - a.radius);
      hi = std::max(hi, a.x[0] + a.radius);
    }
    CHECK(tr.depth.final_value() >= 6.0);
    CHECK(first_passage(tr, 6.0) == tr.end_time);
    for (const auto& [u, t] : tr.passage) CHECK(first_passage(tr, u) == t);
    if (dim == 1) CHECK(tr.interface.final_value() == hi - lo);
    CHECK(continuum_accepted_csv(tr).rfind(dim == 1 ? "j,tau,x,r,I_prev\n1," : "j,tau,x,y,r,I_prev\n1,", 0) == 0);
    CHECK(continuum_passage_csv(tr).rfind("u,T\n1,", 0) == 0);
  }
  ContinuumDualOptions o;
  o.t_max = 3.0;
  o.t_grid = {1.0, 3.0, 4.0};
  const auto tr = simulate_dual_continuum(1, law, 3, o);
  CHECK(tr.end_time == 3.0);
  CHECK(tr.samples.size() == 2);
  CHECK(continuum_samples_csv(tr).rfind("t,D,I\n1,", 0) == 0);
}

TEST_CASE("first passage to depth one obeys the stacking bound") {
  // Fixed radius r: balls centred within eps2/2 of the origin, eps2 = sqrt(2) r,
  // each raise the depth by at least eps2, so T(1) > t needs fewer than 1/eps2
  // of them by time t.
  const double r = 0.25;
  const double eps2 = std::sqrt(2.0) * r;
  const int n = 3000;
  std::vector<double> t1;
  ContinuumDualOptions o;
  o.u_max = 1.0;
  for (int s = 0; s < n; ++s) t1.push_back(first_passage(simulate_dual_continuum(1, RadiusLaw::fixed(r), derive_seed(71, s), o), 1.0));
  for (double t : {2.0, 5.0, 10.0, 20.0}) {
    double exceed = 0;
    for (double v : t1) exceed += v > t;
    const boost::math::poisson_distribution<double> po(eps2 * t / 2.0);
    const double bound = boost::math::cdf(po, std::ceil(1.0 / eps2) - 1.0);
    CHECK(exceed / n <= bound + 3.0 * std::sqrt(bound * (1 - bound) / n) + 1.0 / n);
  }
}

TEST_CASE("agglomeration and profile CSV") {
  Agglomeration agg(2, 0.5, AggregateMode::forward);
  agg.drop(mp(pt(0.5, 0.25), 1.5, 0.5));
  CHECK(agglomeration_csv(agg) == "x,y,r,z_c,T\n0.5,0.25,0.5,0.5,1.5\n");
  CHECK(profile_csv(agg, {pt(0.5, 0.25), pt(3.0, 3.0)}) == "x,y,H\n0.5,0.25,1\n3,3,0\n");
}
