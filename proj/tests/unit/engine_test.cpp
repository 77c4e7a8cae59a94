#include <doctest.h>

#include <cmath>
#include <map>

#include "sdla/coupling.hpp"
#include "sdla/engine.hpp"

using namespace sdla;

namespace {

EngineConfig small_config(int n, double c_dom = 2.0, int box_h = 6) {
  EngineConfig cfg;
  cfg.c_dom = c_dom;
  cfg.truncation = BoxRegion{-n - box_h, n + box_h, 0, box_h};
  return cfg;
}

}  // namespace

TEST_CASE("zero horizon returns the seed with no edges") {
  EngineConfig cfg = small_config(2);
  EventStream stream(1, 1.0, cfg.c_dom);
  RunResult res = run_thinned(segment_seed(2), 0.0, cfg, stream);
  CHECK(res.aggregate.sites().size() == 5);
  CHECK(res.aggregate.edges().empty());
  CHECK(res.diagnostics.accepted == 0);
}

TEST_CASE("thinned aggregate is contained in the interface pathwise") {
  EngineConfig cfg = small_config(2, 2.0, 10);
  SeedPrototype proto = make_seed_prototype(segment_seed(2), cfg);
  for (uint64_t seed = 1; seed <= 12; ++seed) {
    EventStream stream(seed, 1.0, cfg.c_dom);
    RunResult res = run_thinned(segment_seed(2), 1.0, cfg, stream, {}, &proto);
    InterfaceState iface =
        simulate_interface(segment_seed(2), 1.0, cfg.truncation, stream);
    double iface_end = iface.truncation_hit ? iface.hit_time : 1.0;
    for (const Site& s : res.aggregate.sites()) {
      double at = res.aggregate.attach_time(s);
      if (at > iface_end) continue;  // interface stopped early
      REQUIRE(iface.contains(s));
      CHECK(iface.occupied.at(s) <= at);
    }
  }
}

TEST_CASE("forest property holds after a run") {
  EngineConfig cfg = small_config(3);
  EventStream stream(5, 1.0, cfg.c_dom);
  RunResult res = run_thinned(segment_seed(3), 1.0, cfg, stream);
  const Aggregate& a = res.aggregate;
  CHECK(a.edges().size() == a.sites().size() - a.seed_size());
  a.validate_forest();
}

TEST_CASE("thinned engine is deterministic in (seed, cfg, stream)") {
  EngineConfig cfg = small_config(2);
  EventStream stream(77, 1.0, cfg.c_dom);
  RunResult a = run_thinned(segment_seed(2), 1.0, cfg, stream);
  RunResult b = run_thinned(segment_seed(2), 1.0, cfg, stream);
  CHECK(a.aggregate.sites() == b.aggregate.sites());
  CHECK(a.aggregate.edges() == b.aggregate.edges());
  CHECK(a.diagnostics.accepted == b.diagnostics.accepted);
  CHECK(a.diagnostics.events_processed == b.diagnostics.events_processed);
  for (const Site& s : a.aggregate.sites())
    CHECK(a.aggregate.attach_time(s) == b.aggregate.attach_time(s));
}

TEST_CASE("acceptance probabilities stay below one with c_dom = 2") {
  EngineConfig cfg = small_config(4);
  SeedPrototype proto = make_seed_prototype(segment_seed(4), cfg);
  for (uint64_t seed = 100; seed < 110; ++seed) {
    EventStream stream(seed, 1.0, cfg.c_dom);
    RunResult res = run_thinned(segment_seed(4), 1.0, cfg, stream, {}, &proto);
    CHECK(res.diagnostics.prob_violations == 0);
    CHECK(res.diagnostics.max_accept_prob <= 1.0);
    CHECK(res.diagnostics.max_accept_prob > 0.0);
  }
}

TEST_CASE("stream and config must agree on c_dom") {
  EngineConfig cfg = small_config(2);
  EventStream stream(1, 1.0, 1.0);  // c_dom mismatch
  CHECK_THROWS_AS(run_thinned(segment_seed(2), 1.0, cfg, stream), Error);
}

TEST_CASE("kmc halts cleanly when no frontier lies inside the box") {
  EngineConfig cfg;
  cfg.truncation = BoxRegion{-1, 1, 0, 1};
  // Fill the entire box so every in-box head is occupied.
  std::vector<Site> seed;
  for (int x = -1; x <= 1; ++x)
    for (int y = 0; y <= 1; ++y) seed.push_back({x, y});
  Rng rng(9);
  RunResult res = run_kmc(seed, 1.0, cfg, rng);
  CHECK(res.diagnostics.lambda_zero_halt);
  CHECK(res.diagnostics.accepted == 0);
}

TEST_CASE("kmc first attachment from a unit protrusion is its tip edge") {
  // Seed {(0,0)} (plus implied floor absorption in the field): the only
  // positive-rate frontier edge of V is the vertical one.
  EngineConfig cfg = small_config(1);
  cfg.max_attachments = 1;
  Rng rng(31);
  RunResult res = run_kmc({{0, 0}}, 4.0, cfg, rng);
  REQUIRE(res.aggregate.sites().size() == 2);
  CHECK(res.aggregate.sites()[1] == Site{0, 1});
}

TEST_CASE("kmc first-attachment ratios match the exact field") {
  // Seed column {(0,0),(0,1)}: three positive frontier edges with distinct
  // weights; the empirical pick frequencies must match the field ratios.
  std::vector<Site> seed{{0, 0}, {0, 1}};
  EngineConfig cfg = small_config(1);
  cfg.max_attachments = 1;
  SeedPrototype proto = make_seed_prototype(seed, cfg);

  std::map<Site, long, SiteCanonicalLess> hits;
  long reps = 2500;
  for (long r = 0; r < reps; ++r) {
    Rng rng(mix64(404, uint64_t(r)));
    RunResult res = run_kmc(seed, 50.0, cfg, rng, {}, &proto);
    REQUIRE(res.aggregate.sites().size() == 3);
    hits[res.aggregate.sites()[2]]++;
  }

  const StripSolver& f = *proto.solver;
  std::vector<std::pair<Site, double>> expect;
  double total = 0.0;
  for (Dir d : {Dir::PlusX, Dir::MinusX, Dir::Up, Dir::Down}) {
    DirectedEdge e = edge_from({0, 1}, d);
    double v = f.edge_value(e);
    if (v > 0.0) {
      expect.push_back({e.to, v});
      total += v;
    }
  }
  REQUIRE(expect.size() == 3);
  for (const auto& [site, v] : expect) {
    double p = v / total;
    double got = double(hits[site]) / double(reps);
    double se = std::sqrt(p * (1.0 - p) / double(reps));
    CHECK(std::fabs(got - p) < 3.5 * se);
  }
}

TEST_CASE("engines agree on the mean number of attachments") {
  std::vector<Site> seed = segment_seed(4);
  EngineConfig cfg = small_config(4);
  SeedPrototype proto = make_seed_prototype(seed, cfg);
  long reps = 150;
  double sum_t = 0.0, sumsq_t = 0.0, sum_k = 0.0, sumsq_k = 0.0;
  for (long r = 0; r < reps; ++r) {
    EventStream stream(mix64(606, uint64_t(r)), 1.0, cfg.c_dom);
    RunResult a = run_thinned(seed, 1.0, cfg, stream, {}, &proto);
    double na = double(a.aggregate.sites().size() - a.aggregate.seed_size());
    sum_t += na;
    sumsq_t += na * na;
    Rng rng(mix64(707, uint64_t(r)));
    RunResult b = run_kmc(seed, 1.0, cfg, rng, {}, &proto);
    double nb = double(b.aggregate.sites().size() - b.aggregate.seed_size());
    sum_k += nb;
    sumsq_k += nb * nb;
  }
  double mt = sum_t / reps, mk = sum_k / reps;
  double vt = (sumsq_t / reps - mt * mt) / (reps - 1);
  double vk = (sumsq_k / reps - mk * mk) / (reps - 1);
  double se = std::sqrt(vt + vk);
  CHECK(std::fabs(mt - mk) < 3.0 * se);
}

TEST_CASE("truncation hit freezes the thinned engine with a flag") {
  EngineConfig cfg;
  cfg.truncation = BoxRegion{-2, 2, 0, 1};
  SeedPrototype proto = make_seed_prototype(segment_seed(1), cfg);
  bool saw_hit = false;
  for (uint64_t seed = 1; seed < 40 && !saw_hit; ++seed) {
    EventStream stream(seed, 4.0, cfg.c_dom);
    RunResult res = run_thinned(segment_seed(1), 4.0, cfg, stream, {}, &proto);
    if (res.diagnostics.truncation_hit) {
      saw_hit = true;
      CHECK(res.diagnostics.hit_time > 0.0);
      Site last = res.aggregate.sites().back();
      CHECK(!cfg.truncation.contains(last));
    }
  }
  CHECK(saw_hit);
}

TEST_CASE("median max height grows sublinearly in the seed length") {
  std::vector<long> ns{8, 16, 32};
  std::vector<double> medians;
  for (long n : ns) {
    EngineConfig cfg;
    int h = 2 * log_height(int(n)) + 2;
    cfg.truncation = BoxRegion{int(-n - h), int(n + h), 0, h};
    std::vector<Site> seed = segment_seed(int(n));
    SeedPrototype proto = make_seed_prototype(seed, cfg);
    std::vector<int> heights;
    for (long r = 0; r < 9; ++r) {
      EventStream stream(mix64(808, uint64_t(n), uint64_t(r)), 1.0,
                         cfg.c_dom);
      RunResult res = run_thinned(seed, 1.0, cfg, stream, {}, &proto);
      heights.push_back(res.diagnostics.max_height);
    }
    std::sort(heights.begin(), heights.end());
    medians.push_back(double(heights[heights.size() / 2]));
  }
  // Slope fitted on the log-spaced n's: growth must stay far from linear.
  double slope = (medians[2] - medians[0]) /
                 (std::log(double(ns[2])) - std::log(double(ns[0])));
  double linear_slope = (double(ns[2]) - double(ns[0])) /
                        (std::log(double(ns[2])) - std::log(double(ns[0])));
  CHECK(slope < 0.25 * linear_slope);
}

TEST_CASE("initial field n-policy error is quantified per run") {
  EngineConfig cfg = small_config(2);
  SeedPrototype proto = make_seed_prototype(segment_seed(2), cfg);
  CHECK(proto.n_error >= 0.0);
  CHECK(proto.n_error < 0.05);
}
