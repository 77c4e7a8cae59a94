#include "sdla/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace sdla {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

std::vector<Site> blocked_sites(const std::vector<Site>& seed) {
  std::vector<Site> blocked;
  for (const Site& s : seed)
    if (s.x2 > 0) blocked.push_back(s);
  return blocked;
}

void validate_seed(const std::vector<Site>& seed, const BoxRegion& trunc) {
  if (seed.empty()) fail_pre("engine: empty seed");
  for (const Site& s : seed) {
    if (!s.in_half_plane()) fail_pre("engine: seed site outside H");
    if (!trunc.contains(s)) fail_pre("engine: seed outside truncation");
  }
  // Seeds are either floor segments or finite forests; connectivity to L_0
  // is the forest requirement that is checkable on a plain site set.
  Aggregate probe(seed);
  probe.validate_forest(true);
}

}  // namespace

ThinnedEngine::ThinnedEngine(const std::vector<Site>& seed,
                             const EngineConfig& cfg,
                             const EventStream& stream,
                             const SeedPrototype* warm_proto)
    : cfg_(cfg), stream_(&stream), agg_(seed) {
  cfg_.validate();
  validate_seed(seed, cfg_.truncation);
  if (stream.c_dom() != cfg_.c_dom)
    fail_pre("engine: stream c_dom differs from config");
  BoxRegion dom = cfg_.solve_domain();
  if (warm_proto != nullptr) {
    if (!(warm_proto->solver->domain() == dom))
      fail_pre("engine: warm prototype has a different domain");
    solver_ = std::make_unique<StripSolver>(*warm_proto->solver);
    diag_.initial_field_n_error = warm_proto->n_error;
    diag_.recomputes = 1;
    diag_.last_residual = solver_->residual();
  } else {
    SeedPrototype proto = make_seed_prototype(seed, cfg_);
    solver_ = std::move(proto.solver);
    diag_.initial_field_n_error = proto.n_error;
    diag_.recomputes = 1;
    diag_.last_residual = solver_->residual();
  }
  diag_.max_height = agg_.max_height();
}

void ThinnedEngine::refresh_field() {
  long before = solver_->total_sweeps();
  solver_->solve();
  diag_.recomputes++;
  diag_.solver_sweeps += solver_->total_sweeps() - before;
  diag_.last_residual = solver_->residual();
  events_since_refresh_ = 0;
}

double ThinnedEngine::acceptance_probability(const EdgeEvent& ev) const {
  return solver_->edge_value(ev.edge) / stream_->rate(ev.edge);
}

ThinnedEngine::Outcome ThinnedEngine::handle(const EdgeEvent& ev) {
  if (frozen_) fail_pre("ThinnedEngine: handle after freeze");
  diag_.events_processed++;
  const Site& x = ev.edge.from;
  const Site& y = ev.edge.to;
  if (!agg_.contains(x) || agg_.contains(y)) {
    diag_.skipped++;
    return Outcome::Skipped;
  }
  auto t0 = std::chrono::steady_clock::now();
  double prob = acceptance_probability(ev);
  diag_.max_accept_prob = std::max(diag_.max_accept_prob, prob);
  if (prob > 1.0) {
    diag_.prob_violations++;
    fail_num("dominating rate violated on edge " + ev.edge.str() +
             " (acceptance probability " + std::to_string(prob) + ")");
  }
  bool accept = ev.mark <= prob;
  double recompute_ms = 0.0;
  if (accept) {
    agg_.attach(ev.edge, ev.time);
    diag_.accepted++;
    diag_.max_height = std::max(diag_.max_height, y.x2);
    solver_->attach(y);
    events_since_refresh_++;
    if (!cfg_.truncation.contains(y)) {
      diag_.truncation_hit = true;
      diag_.hit_time = ev.time;
      frozen_ = true;
    }
    if (cfg_.max_attachments > 0 && diag_.accepted >= cfg_.max_attachments)
      frozen_ = true;
    // A frozen engine's field is never consulted again.
    bool due = cfg_.harmonic_refresh == EngineConfig::Refresh::EveryAcceptance ||
               events_since_refresh_ >= cfg_.refresh_k;
    if (!frozen_ && due) {
      refresh_field();
      recompute_ms = ms_since(t0);
    }
  } else {
    diag_.rejected++;
  }
  if (cfg_.record_events)
    diag_.rows.push_back({ev.time, ev.edge, accept, prob, recompute_ms});
  return accept ? Outcome::Accepted : Outcome::Rejected;
}

RunResult run_thinned(const std::vector<Site>& seed, double t_end,
                      const EngineConfig& cfg, const EventStream& stream,
                      const std::vector<double>& snapshot_times,
                      const SeedPrototype* warm_proto) {
  if (t_end > stream.horizon()) fail_pre("run_thinned: t_end beyond horizon");
  ThinnedEngine eng(seed, cfg, stream, warm_proto);
  EventFeed feed(stream);
  for (const Site& s : seed) feed.activate_site(s, 0.0);

  std::vector<double> snaps = snapshot_times;
  std::sort(snaps.begin(), snaps.end());
  size_t next_snap = 0;
  RunResult out;

  while (!eng.frozen()) {
    auto ev = feed.pop(t_end);
    if (!ev) break;
    while (next_snap < snaps.size() && snaps[next_snap] < ev->time) {
      Aggregate a = eng.aggregate();
      a.set_time(snaps[next_snap]);
      out.snapshots.push_back(std::move(a));
      next_snap++;
    }
    auto outcome = eng.handle(*ev);
    if (outcome == ThinnedEngine::Outcome::Accepted)
      feed.activate_site(ev->edge.to, ev->time);
    if (eng.occupies(ev->edge.to)) feed.retire(ev->edge);
  }
  while (next_snap < snaps.size()) {
    Aggregate a = eng.aggregate();
    a.set_time(std::min(snaps[next_snap], t_end));
    out.snapshots.push_back(std::move(a));
    next_snap++;
  }
  out.aggregate = eng.aggregate();
  if (!eng.frozen()) out.aggregate.set_time(t_end);
  out.diagnostics = eng.diagnostics();
  return out;
}

RunResult run_kmc(const std::vector<Site>& seed, double t_end,
                  const EngineConfig& cfg, Rng& rng,
                  const std::vector<double>& snapshot_times,
                  const SeedPrototype* warm_proto) {
  cfg.validate();
  validate_seed(seed, cfg.truncation);
  BoxRegion dom = cfg.solve_domain();
  std::unique_ptr<StripSolver> solver;
  if (warm_proto != nullptr) {
    if (!(warm_proto->solver->domain() == dom))
      fail_pre("run_kmc: warm prototype has a different domain");
    solver = std::make_unique<StripSolver>(*warm_proto->solver);
  } else {
    solver = std::make_unique<StripSolver>(dom, blocked_sites(seed),
                                           cfg.harmonic_tol);
    solver->solve();
  }
  long sweep_base = solver->total_sweeps();

  RunResult out;
  Aggregate agg(seed);
  EngineDiagnostics diag;
  diag.recomputes = 1;
  diag.max_height = agg.max_height();

  std::vector<double> snaps = snapshot_times;
  std::sort(snaps.begin(), snaps.end());
  size_t next_snap = 0;
  auto take_snaps_until = [&](double t) {
    while (next_snap < snaps.size() && snaps[next_snap] < t) {
      Aggregate a = agg;
      a.set_time(snaps[next_snap]);
      out.snapshots.push_back(std::move(a));
      next_snap++;
    }
  };

  double t = 0.0;
  while (true) {
    // Frontier edges of V in canonical site order; deterministic iteration
    // makes the replica reproducible for a fixed rng stream.
    // Jump rates live on frontier edges with heads inside the truncation;
    // an empty in-box frontier is a clean halt.
    std::vector<std::pair<DirectedEdge, double>> frontier;
    double total = 0.0;
    for (const Site& s : agg.sites_canonical()) {
      for (Dir d : {Dir::PlusX, Dir::MinusX, Dir::Up, Dir::Down}) {
        DirectedEdge e = edge_from(s, d);
        if (!e.to.in_half_plane() || agg.contains(e.to)) continue;
        if (!cfg.truncation.contains(e.to)) continue;
        double v = solver->edge_value(e);
        if (v > 0.0) {
          frontier.push_back({e, v});
          total += v;
        }
      }
    }
    if (total <= 0.0) {
      diag.lambda_zero_halt = true;
      break;
    }
    double dt = rng.next_exp(total);
    if (t + dt > t_end) {
      t = t_end;
      break;
    }
    t += dt;
    take_snaps_until(t);
    double u = rng.next_unit() * total;
    double acc = 0.0;
    DirectedEdge chosen = frontier.back().first;
    for (const auto& [e, v] : frontier) {
      acc += v;
      if (u <= acc) {
        chosen = e;
        break;
      }
    }
    agg.attach(chosen, t);
    diag.accepted++;
    diag.events_processed++;
    diag.max_height = std::max(diag.max_height, chosen.to.x2);
    if (cfg.record_events)
      diag.rows.push_back({t, chosen, true, 0.0, 0.0});
    if (cfg.max_attachments > 0 && diag.accepted >= cfg.max_attachments) break;
    solver->attach(chosen.to);
    solver->solve();
    diag.recomputes++;
    diag.last_residual = solver->residual();
  }
  take_snaps_until(t_end + 1.0);
  diag.solver_sweeps = solver->total_sweeps() - sweep_base;
  agg.set_time(diag.truncation_hit ? diag.hit_time : t);
  out.aggregate = std::move(agg);
  out.diagnostics = std::move(diag);
  return out;
}

std::string snapshot(const Aggregate& a) { return serialize(a); }

Aggregate load_snapshot(const std::string& body) {
  return to_aggregate(parse_aggregate(body));
}

std::vector<Site> segment_seed(int n) {
  std::vector<Site> seed;
  for (int x = -n; x <= n; ++x) seed.push_back({x, 0});
  return seed;
}

SeedPrototype make_seed_prototype(const std::vector<Site>& seed,
                                  const EngineConfig& cfg) {
  cfg.validate();
  SeedPrototype proto;
  proto.solver = std::make_unique<StripSolver>(
      cfg.solve_domain(), blocked_sites(seed), cfg.harmonic_tol);
  proto.solver->solve();

  // Once-per-run policy audit: the fixed in-loop N against 2N on the seed
  // frontier.
  int N = cfg.run_N();
  StripSolver check(cfg.harmonic_policy.domain_for_extent(
                        cfg.truncation.x_min, cfg.truncation.x_max, 2 * N),
                    blocked_sites(seed), cfg.harmonic_tol);
  check.solve();
  double err = 0.0;
  for (const Site& s : seed) {
    for (Dir d : {Dir::PlusX, Dir::MinusX, Dir::Up, Dir::Down}) {
      DirectedEdge e = edge_from(s, d);
      if (!e.to.in_half_plane()) continue;
      err = std::max(
          err, std::fabs(check.edge_value(e) - proto.solver->edge_value(e)));
    }
  }
  proto.n_error = err;
  return proto;
}

}  // namespace sdla
