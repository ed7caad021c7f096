#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "bdlab/graph.hpp"
#include "bdlab/rng.hpp"
#include "oracle.hpp"

using namespace bdlab;

namespace {

DisplacementFunction pick(int k, int dim) {
  switch (k % 3) {
    case 0: return DisplacementFunction::nearest_neighbour(dim);
    case 1: return DisplacementFunction::next_nearest_neighbour(dim);
    default:
      if (dim == 1) {
        return DisplacementFunction::from_table(1, {{site1(0), 1.0}, {site1(1), 0.5}, {site1(-2), -0.25}});
      }
      return DisplacementFunction::from_table(2, {{site2(0, 0), 1.0}, {site2(1, 0), 0.0}, {site2(0, -1), 2.5}});
  }
}

// Small realization with at most `cap` events.
ArrivalRealization tiny(std::mt19937_64& gen, int dim, double t, std::size_t cap) {
  const Box w = dim == 1 ? Box::centered_side(1, 5) : Box::centered_side(2, 3);
  while (true) {
    auto r = generate_arrivals(w, t, gen());
    if (r.events.size() <= cap) return r;
  }
}

}  // namespace

TEST_CASE("empty realization: path height is the zero-field next-arrival height") {
  const ArrivalRealization empty{Box::centered_side(1, 3), 2.0, 0, {}};
  CHECK(max_path_height(empty, 2.0, site1(0), DisplacementFunction::nearest_neighbour(1),
                        Direction::forward) == 1.0);
  CHECK(max_path_height(empty, 2.0, site1(0), DisplacementFunction::next_nearest_neighbour(1),
                        Direction::forward) == 1.0);
  const EventGraph g(empty, DisplacementFunction::nearest_neighbour(1), Direction::forward);
  CHECK(g.vertices().size() == 2 * 3);
}

TEST_CASE("single event examples") {
  const auto nn = DisplacementFunction::nearest_neighbour(1);
  const auto nnn = DisplacementFunction::next_nearest_neighbour(1);
  const ArrivalRealization at0{Box::centered_side(1, 3), 2.0, 0, {{site1(0), 1.0}}};
  CHECK(max_path_height(at0, 2.0, site1(0), nn, Direction::forward) == 2.0);

  // Dual seed at 0, one arrival at 1: xi^(1) becomes D^(1) = 1 and the
  // next-arrival height at 1 afterwards is xi^(1) + D^(0) = 2.
  const ArrivalRealization at1{Box::centered_side(1, 3), 2.0, 0, {{site1(1), 1.0}}};
  const EventGraph g(at1, nnn, Direction::reversed);
  const auto dp = solve_paths(g);
  CHECK(dp.value[0] == 1.0);
  CHECK(max_path_height(g, dp, site1(1)) == 2.0);
  CHECK(max_path_height(g, dp, site1(2)) == 2.0);
  CHECK(max_path_height(g, dp, site1(3)) == kNegInf);
  oracle::MapField f{oracle::neg_inf, {{Site{}, 0.0}}};
  f.h[site1(1)] = oracle::eta(f, site1(1), nnn.dual());
  CHECK(oracle::eta(f, site1(1), nnn.dual()) == 2.0);
}

TEST_CASE("graph structure invariants") {
  std::mt19937_64 gen(3);
  const auto r = tiny(gen, 2, 1.0, 14);
  const EventGraph g(r, DisplacementFunction::nearest_neighbour(2), Direction::forward);
  CHECK(g.vertices().size() == r.events.size() + 2 * r.window.size());
  CHECK(g.event_count() == r.events.size());
  std::size_t total = 0;
  for (const auto& s : r.window.sites()) {
    const auto ev = g.events_at(s);
    total += ev.size();
    for (std::size_t i = 1; i < ev.size(); ++i) CHECK(g.vertices()[ev[i - 1]].time < g.vertices()[ev[i]].time);
  }
  CHECK(total == r.events.size());
  CHECK(g.events_at(site2(10, 10)).empty());
}

TEST_CASE("enumeration without events gives only direct paths") {
  const auto nn = DisplacementFunction::nearest_neighbour(2);
  const ArrivalRealization empty{Box::centered_side(2, 3), 1.0, 0, {}};
  const auto paths = enumerate_paths(empty, 1.0, Site{}, nn, Direction::forward);
  CHECK(paths.size() == nn.size());
  for (const auto& p : paths) CHECK(p.vertices.size() == 2);
  const auto dual = enumerate_paths(empty, 1.0, site2(0, 1), nn, Direction::reversed);
  REQUIRE(dual.size() == 1);
  CHECK(dual[0].height == 0.0);
}

TEST_CASE("two events at one site give at least three paths") {
  const auto nn = DisplacementFunction::nearest_neighbour(1);
  const ArrivalRealization r{Box::centered_side(1, 3), 3.0, 0, {{site1(0), 1.0}, {site1(0), 2.0}}};
  const auto paths = enumerate_paths(r, 3.0, site1(0), nn, Direction::forward);
  CHECK(paths.size() >= 3);
  double best = kNegInf;
  for (const auto& p : paths) best = std::max(best, p.height);
  CHECK(best == 3.0);
}

TEST_CASE("enumeration cap") {
  std::vector<Arrival> ev;
  for (int i = 0; i < 15; ++i) ev.push_back({site1(0), 0.1 * (i + 1)});
  const ArrivalRealization r{Box::centered_side(1, 3), 2.0, 0, ev};
  CHECK_THROWS_AS(enumerate_paths(r, 2.0, site1(0), DisplacementFunction::nearest_neighbour(1),
                                  Direction::forward),
                  std::length_error);
  CHECK_NOTHROW(enumerate_paths(r, 2.0, site1(0), DisplacementFunction::nearest_neighbour(1),
                                Direction::forward, 15));
}

TEST_CASE("DP, enumeration and replay agree on random instances") {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 1 + trial % 2;
    const auto d = pick(trial / 2, dim);
    const auto r = tiny(gen, dim, dim == 1 ? 1.6 : 1.0, 12);
    const double t = r.horizon;
    const EventGraph g(r, d, Direction::forward);
    const auto dp = solve_paths(g);
    const auto field = oracle::replay(r, t, d);
    for (const auto& z : r.window.expanded(1).sites()) {
      const double h = max_path_height(g, dp, z);
      CHECK(h == oracle::eta(field, z, d));
      const auto paths = enumerate_paths(r, t, z, d, Direction::forward);
      double best = kNegInf;
      for (const auto& p : paths) {
        best = std::max(best, p.height);
        CHECK(p.height == path_height(p.skeleton(), d, Direction::forward));
        CHECK(p.vertices.front().time == 0.0);
        CHECK(p.vertices.back().time == t);
      }
      CHECK(best == h);
      const auto bp = best_path(g, dp, z);
      CHECK(bp.height == h);
      CHECK(path_height(bp.skeleton(), d, Direction::forward) == h);
      for (std::size_t i = 1; i < bp.vertices.size(); ++i) {
        CHECK(bp.vertices[i - 1].time <= bp.vertices[i].time);
      }
    }
    // Each event's DP value is the height it is assigned during replay.
    oracle::MapField f;
    for (std::size_t v = 0; v < r.events.size(); ++v) {
      f.h[r.events[v].site] = oracle::eta(f, r.events[v].site, d);
      CHECK(dp.value[v] == f.h[r.events[v].site]);
    }
  }
}

TEST_CASE("reverse_realization") {
  const ArrivalRealization empty{Box::centered_side(1, 3), 5.0, 0, {}};
  CHECK(reverse_realization(empty, 5.0).events.empty());
  const ArrivalRealization r{Box::centered_side(1, 3), 5.0, 0, {{site1(0), 1.0}, {site1(1), 4.0}}};
  const auto rev = reverse_realization(r, 5.0);
  REQUIRE(rev.events.size() == 2);
  CHECK(rev.events[0] == Arrival{site1(1), 1.0});
  CHECK(rev.events[1] == Arrival{site1(0), 4.0});
  const auto big = generate_arrivals(Box::centered_side(2, 9), 5.0, 4);
  const auto twice = reverse_realization(reverse_realization(big, 5.0), 5.0);
  CHECK(twice.events == big.events);
  std::map<Site, int> a, b;
  for (const auto& e : big.events) ++a[e.site];
  for (const auto& e : reverse_realization(big, 5.0).events) ++b[e.site];
  CHECK(a == b);
}

TEST_CASE("reversal maps paths ending at the origin onto dual paths from the origin") {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 60; ++trial) {
    const int dim = 1 + trial % 2;
    const auto d = pick(trial, dim);
    const auto r = tiny(gen, dim, dim == 1 ? 1.6 : 1.0, 10);
    const double t = r.horizon;
    std::vector<double> fwd;
    for (const auto& p : enumerate_paths(r, t, Site{}, d, Direction::forward)) fwd.push_back(p.height);
    const auto rev = reverse_realization(r, t);
    std::vector<double> dual;
    for (const auto& z : r.window.expanded(2 * d.range()).sites()) {
      for (const auto& p : enumerate_paths(rev, t, z, d, Direction::reversed)) {
        CHECK(p.vertices.front().site == Site{});
        dual.push_back(p.height);
      }
    }
    std::sort(fwd.begin(), fwd.end());
    std::sort(dual.begin(), dual.end());
    CHECK(fwd == dual);
  }
}

TEST_CASE("duality check on explicit realizations") {
  const ArrivalRealization empty{Box::centered_side(1, 3), 5.0, 0, {}};
  for (const auto& d : {DisplacementFunction::nearest_neighbour(1), DisplacementFunction::next_nearest_neighbour(1)}) {
    const auto rep = duality_check(empty, 5.0, d);
    CHECK(rep.forward_graph == 1.0);
    CHECK(rep.dual_graph == 1.0);
    CHECK(rep.equal);
  }
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 60; ++trial) {
    const int dim = 1 + trial % 2;
    const auto d = pick(trial, dim);
    const auto r = generate_arrivals(Box::centered_radius(dim, dim == 1 ? 10 : 4), 2.0, gen());
    const auto rep = duality_check(r, 2.0, d);
    CHECK(rep.equal);
    const auto rev = reverse_realization(r, 2.0);
    CHECK(rep.dual_replay == oracle::dual_depth(rev, d, 2 * d.range()));
  }
}

TEST_CASE("certified duality check") {
  for (int k = 0; k < 3; ++k) {
    const auto d = pick(k, 1);
    for (int s = 0; s < 30; ++s) {
      const auto rep = certified_duality_check(3.0, d, derive_seed(k, s));
      CHECK(rep.certified);
      CHECK(rep.equal);
    }
  }
}

TEST_CASE("light-cone window and full bound window give the same duality report") {
  const auto d = DisplacementFunction::next_nearest_neighbour(2);
  for (int s = 0; s < 3; ++s) {
    const auto tight = certified_duality_check(5.0, d, derive_seed(77, s));
    const auto full = certified_duality_check(5.0, d, derive_seed(77, s), 1e-9, WindowChoice::bound);
    CHECK(tight.certified);
    CHECK(full.certified);
    CHECK(tight.equal);
    CHECK(full.equal);
    CHECK(tight.forward_replay == full.forward_replay);
    CHECK(tight.window.size() < full.window.size());
  }
}

TEST_CASE("event graph CSV") {
  const ArrivalRealization r{Box::centered_side(2, 1), 2.0, 0, {{site2(0, 0), 1.0}}};
  const EventGraph g(r, DisplacementFunction::nearest_neighbour(2), Direction::forward);
  const auto csv = event_graph_csv(g, solve_paths(g));
  CHECK(csv.rfind("id,kind,x,y,time,value,pred_id,pred_site\n", 0) == 0);
  CHECK(csv.find("0,event,0,0,1,1,-1,0 0\n") != std::string::npos);
  CHECK(csv.find("2,top,0,0,2,2,0,0 0\n") != std::string::npos);
}
