#include <doctest.h>

#include <cmath>

#include "sdla/harmonic.hpp"
#include "test_support.hpp"

using namespace sdla;

namespace {

bool near(double a, double b, double tol) { return std::fabs(a - b) < tol; }

}  // namespace

TEST_CASE("edges into the aggregate carry no mass") {
  AggregateSet b({{0, 1}, {0, 2}}, true);
  HarmonicField f = solve_hitting_field(b, 8, HarmonicPolicy{}, 1e-10, false);
  CHECK(f.value({{0, 1}, {0, 2}}) == 0.0);   // head inside B
  CHECK(f.value({{0, 1}, {0, 0}}) == 0.0);   // head on the floor
  CHECK(f.value({{0, 2}, {0, 3}}) > 0.0);
  for (const auto& [e, v] : f.values) {
    CHECK(b.effective_contains(e.from));
    CHECK(!b.effective_contains(e.to));
    CHECK(v >= 0.0);
    CHECK(std::isfinite(v));
  }
}

TEST_CASE("reflection symmetry of a single column site") {
  AggregateSet b({{0, 1}}, true);
  HarmonicField f = solve_hitting_field(b, 8, HarmonicPolicy{}, 1e-11, false);
  CHECK(near(f.value({{0, 1}, {1, 1}}), f.value({{0, 1}, {-1, 1}}), 1e-9));
}

TEST_CASE("floor-only field: unit point mass and translation invariance") {
  AggregateSet b;  // floor only
  for (int N : {4, 8, 16}) {
    HarmonicField f = solve_hitting_field(b, N, HarmonicPolicy{}, 1e-11, false);
    double v0 = f.point({0, 0});
    CHECK(near(v0, 1.0, 0.01));
    CHECK(near(v0, f.point({7, 0}), 1e-3));
    CHECK(near(v0, f.point({-13, 0}), 1e-3));
  }
}

TEST_CASE("floor-only N-sequence has decreasing increments") {
  AggregateSet b;
  HarmonicPolicy pol;
  double prev = 0.0;
  std::vector<double> vals;
  for (int N : {4, 8, 16, 32}) {
    HarmonicField f = solve_hitting_field(b, N, pol, 1e-11, false);
    vals.push_back(f.point({0, 0}));
  }
  (void)prev;
  double inc1 = std::fabs(vals[1] - vals[0]);
  double inc2 = std::fabs(vals[2] - vals[1]);
  double inc3 = std::fabs(vals[3] - vals[2]);
  CHECK(inc2 < inc1);
  CHECK(inc3 < inc2);
}

TEST_CASE("point measure equals the sum of edge values out of the site") {
  AggregateSet b({{0, 1}, {1, 1}}, true);
  HarmonicField f = solve_hitting_field(b, 8, HarmonicPolicy{}, 1e-10, false);
  double sum = 0.0;
  for (Dir d : {Dir::PlusX, Dir::MinusX, Dir::Up, Dir::Down}) {
    Site y = step({0, 1}, d);
    if (y.in_half_plane()) sum += f.value({{0, 1}, y});
  }
  CHECK(f.point({0, 1}) == doctest::Approx(sum));
}

TEST_CASE("includes_floor toggle changes nothing for floor-owning sets") {
  AggregateSet b1({{0, 0}, {0, 1}}, true);
  AggregateSet b2({{0, 0}, {0, 1}}, false);
  BoxRegion dom = HarmonicPolicy{}.domain_for(b1, 8);
  HarmonicField f1 = solve_hitting_field(b1, 8, dom, 1e-10, false);
  HarmonicField f2 = solve_hitting_field(b2, 8, dom, 1e-10, false);
  REQUIRE(f1.values.size() == f2.values.size());
  for (const auto& [e, v] : f1.values)
    CHECK(v == doctest::Approx(f2.value(e)));
}

TEST_CASE("enlarging B cannot increase a retained frontier edge") {
  AggregateSet small({{0, 1}}, true);
  AggregateSet large({{0, 1}, {1, 1}, {2, 1}}, true);
  BoxRegion dom = HarmonicPolicy{}.domain_for(large, 8);
  HarmonicField fs = solve_hitting_field(small, 8, dom, 1e-11, false);
  HarmonicField fl = solve_hitting_field(large, 8, dom, 1e-11, false);
  for (const auto& [e, v] : fl.values) {
    if (fs.values.count(e) == 0) continue;
    CHECK(v <= fs.value(e) + 1e-9);
  }
}

TEST_CASE("mass balance closes: sources = edges + side loss") {
  AggregateSet b({{0, 1}, {0, 2}, {1, 2}}, true);
  HarmonicField f = solve_hitting_field(b, 8, HarmonicPolicy{}, 1e-11, false);
  double lhs = f.balance.total_source;
  double rhs = f.balance.edge_mass + f.balance.side_loss;
  CHECK(near(lhs, rhs, 1e-6 * std::max(1.0, lhs)));
  CHECK(f.balance.floor_edge_mass < f.balance.edge_mass);
}

TEST_CASE("forward solver matches the independent backward per-edge oracle") {
  AggregateSet b({{0, 1}}, true);
  BoxRegion dom{-12, 12, 0, 4};
  HarmonicField f = solve_hitting_field(b, 4, dom, 1e-12, false);
  auto absorbing = [&b](const Site& s) { return b.effective_contains(s); };
  for (DirectedEdge e : {DirectedEdge{{0, 1}, {0, 2}},
                         DirectedEdge{{0, 1}, {1, 1}},
                         DirectedEdge{{2, 0}, {2, 1}}}) {
    double oracle = sdla_test::edge_measure_oracle(e, absorbing, dom, 1e-13);
    CHECK(f.value(e) == doctest::Approx(oracle).epsilon(1e-6));
  }
}

TEST_CASE("monte carlo estimate agrees with the exact field") {
  AggregateSet b;  // floor
  Rng rng(77);
  McEstimate mc = mc_hm_estimate(b, {0, 0}, 8, 20000, rng, HarmonicPolicy{});
  HarmonicField f =
      solve_hitting_field(b, 8, HarmonicPolicy{}, 1e-10, false);
  double exact = f.point({0, 0});
  CHECK(std::fabs(mc.mean - exact) < 3.0 * mc.std_error);
  CHECK(!mc.flagged);

  AggregateSet col({{0, 1}, {0, 2}}, true);
  Rng rng2(78);
  McEstimate mc2 =
      mc_hm_estimate(col, {0, 2}, 16, 20000, rng2, HarmonicPolicy{});
  HarmonicField f2 =
      solve_hitting_field(col, 16, HarmonicPolicy{}, 1e-10, false);
  CHECK(std::fabs(mc2.mean - f2.point({0, 2})) < 3.0 * mc2.std_error);
}

TEST_CASE("mc preconditions") {
  AggregateSet b;
  Rng rng(1);
  CHECK_THROWS_AS(mc_hm_estimate(b, {0, 0}, 8, 0, rng, HarmonicPolicy{}),
                  Error);
  CHECK_THROWS_AS(mc_hm_estimate(b, {0, 3}, 8, 10, rng, HarmonicPolicy{}),
                  Error);  // x not in effective B
}

TEST_CASE("outer point measure sums the incoming edges") {
  AggregateSet b({{0, 1}}, true);
  BoxRegion dom = HarmonicPolicy{}.domain_for(b, 8);
  HarmonicField f = solve_hitting_field(b, 8, dom, 1e-11, false);

  // y = (0, 2): only aggregate neighbor is (0, 1).
  double single = hm_outer_point(b, {0, 2}, 8, dom);
  CHECK(single == doctest::Approx(f.value({{0, 1}, {0, 2}})));

  // y = (1, 1): adjacent to (0,1) and to the floor site (1,0).
  double dual = hm_outer_point(b, {1, 1}, 8, dom);
  CHECK(dual ==
        doctest::Approx(f.value({{0, 1}, {1, 1}}) + f.value({{1, 0}, {1, 1}})));

  CHECK_THROWS_AS(hm_outer_point(b, {5, 5}, 8, dom), Error);  // not adjacent
}

TEST_CASE("fully surrounded site has zero point measure") {
  AggregateSet b({{0, 1}, {-1, 0}, {1, 0}, {-1, 1}, {1, 1}, {0, 2}}, true);
  BoxRegion dom = HarmonicPolicy{}.domain_for(b, 8);
  CHECK(hm_point(b, {0, 0}, 8, dom) == doctest::Approx(0.0));
}

TEST_CASE("edge limit: floor limits are translation invariant") {
  AggregateSet b;
  EdgeLimit l0 = hm_edge_limit(b, {{0, 0}, {0, 1}}, 1e-3);
  EdgeLimit l7 = hm_edge_limit(b, {{7, 0}, {7, 1}}, 1e-3);
  CHECK(l0.converged);
  CHECK(l7.converged);
  CHECK(near(l0.value, l7.value, 2e-3));
  CHECK(l0.sequence.size() >= 2);
}

TEST_CASE("edge limit increments decrease and direction is recorded") {
  AggregateSet b({{0, 1}, {0, 2}}, true);
  EdgeLimit l = hm_edge_limit(b, {{0, 2}, {0, 3}}, 2e-3);
  CHECK(l.converged);
  REQUIRE(l.sequence.size() >= 3);
  for (size_t i = 2; i < l.sequence.size(); ++i) {
    double prev = std::fabs(l.sequence[i - 1].second - l.sequence[i - 2].second);
    double cur = std::fabs(l.sequence[i].second - l.sequence[i - 1].second);
    CHECK(cur < prev + 1e-12);
  }
  CHECK(l.monotone_direction != 0);
}

TEST_CASE("solver preconditions") {
  AggregateSet b({{0, 3}}, true);
  CHECK_THROWS_AS(solve_hitting_field(b, 3, HarmonicPolicy{}, 1e-10, false),
                  Error);  // N must exceed max height
}

TEST_CASE("height bound audit over small columns") {
  std::vector<AggregateSet> suite;
  for (int h : {1, 2, 3, 4}) suite.push_back(column_set(h));
  HeightBoundReport rep = verify_height_bound(suite, 0.10, HarmonicPolicy{});
  CHECK(rep.c_audit > 0.0);
  CHECK(rep.per_height_nonincreasing);
  REQUIRE(rep.per_height_max.count(1) == 1);
  REQUIRE(rep.per_height_max.count(4) == 1);
  CHECK(rep.per_height_max[4] <= rep.per_height_max[1] * 1.10);

  // Floor only: the bound concerns x2 >= 1, so the report stays empty.
  HeightBoundReport empty = verify_height_bound({AggregateSet{}}, 0.10);
  CHECK(empty.per_height_max.empty());
  CHECK(empty.c_audit == 0.0);
}

TEST_CASE("L-shaped aggregate stays within the audited envelope") {
  std::vector<AggregateSet> cols;
  for (int h : {1, 2, 3, 4}) cols.push_back(column_set(h));
  HeightBoundReport col_rep = verify_height_bound(cols, 0.10);

  AggregateSet ell({{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 4}, {2, 4}}, true);
  HeightBoundReport ell_rep = verify_height_bound({ell}, 0.10);
  CHECK(ell_rep.c_audit <= col_rep.c_audit * 2.0);
}
