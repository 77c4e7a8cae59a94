#include "sdla/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace sdla {

int log_height(int n) {
  if (n < 1) fail_pre("log_height: n must be >= 1");
  int h = int(std::ceil(std::log(double(n))));
  return std::max(h, 2);
}

BoxRegion coupling_box(int n) {
  int h = log_height(n);
  return BoxRegion{-n - h, n + h, 0, h};
}

EngineConfig coupling_config(int n, double c_dom) {
  EngineConfig cfg;
  cfg.c_dom = c_dom;
  // The box must admit the (n+1)-seed endpoints as well.
  BoxRegion box = coupling_box(n);
  box.x_min = std::min(box.x_min, -(n + 1));
  box.x_max = std::max(box.x_max, n + 1);
  cfg.truncation = box;
  return cfg;
}

CoupledPrototypes make_coupled_prototypes(int n, const EngineConfig& cfg) {
  CoupledPrototypes p;
  p.proto_n = make_seed_prototype(segment_seed(n), cfg);
  p.proto_np1 = make_seed_prototype(segment_seed(n + 1), cfg);
  return p;
}

std::pair<CoupledState, DiscrepancyRecord> run_coupled(
    int n, double T, const std::vector<BoxRegion>& windows,
    const EngineConfig& cfg, const EventStream& stream,
    const CoupledPrototypes* protos, const CouplingOptions& opts) {
  if (T > stream.horizon()) fail_pre("run_coupled: T beyond stream horizon");
  std::vector<Site> seed_n = segment_seed(n);
  std::vector<Site> seed_np1 = segment_seed(n + 1);

  ThinnedEngine eng_n(seed_n, cfg, stream,
                      protos ? &protos->proto_n : nullptr);
  ThinnedEngine eng_np1(seed_np1, cfg, stream,
                        protos ? &protos->proto_np1 : nullptr);

  CoupledState st;
  st.n = n;
  // At t = 0 the seeds differ exactly by the two endpoints.
  st.v_d.insert({n + 1, 0});
  st.v_d.insert({-(n + 1), 0});

  DiscrepancyRecord rec;
  rec.disagreed.assign(windows.size(), 0);
  auto note_site = [&](const Site& s) {
    // s just entered the symmetric difference V^n triangle V^{n+1}.
    if (st.v_d.insert(s).second) {
      for (size_t w = 0; w < windows.size(); ++w)
        if (windows[w].contains(s)) rec.disagreed[w] = 1;
    }
  };
  for (size_t w = 0; w < windows.size(); ++w)
    for (const Site& s : st.v_d)
      if (windows[w].contains(s)) rec.disagreed[w] = 1;

  auto trace_lambda = [&](double t) {
    if (!opts.trace_lambda_d) return;
    rec.lambda_d_trace.push_back({t, lambda_d(eng_n.aggregate(),
                                              eng_np1.aggregate(),
                                              eng_n.solver(),
                                              eng_np1.solver())});
  };
  trace_lambda(0.0);

  EventFeed feed(stream);
  for (const Site& s : seed_np1) feed.activate_site(s, 0.0);

  while (!st.gamma_hit) {
    auto ev = feed.pop(T);
    if (!ev) break;
    const Site& y = ev->edge.to;
    bool in_n_before = eng_n.occupies(y);
    bool in_np1_before = eng_np1.occupies(y);
    auto out_n = eng_n.handle(*ev);
    auto out_np1 = eng_np1.handle(*ev);
    bool acc_n = out_n == ThinnedEngine::Outcome::Accepted;
    bool acc_np1 = out_np1 == ThinnedEngine::Outcome::Accepted;

    if (acc_n || acc_np1) feed.activate_site(y, ev->time);
    if (eng_n.occupies(y) && eng_np1.occupies(y)) feed.retire(ev->edge);

    // Edge discrepancy: the edge enters exactly one attachment set.  An edge
    // can only be accepted once per engine, so acc_n != acc_np1 is the
    // creation event of e in E^n triangle E^{n+1}.
    if (acc_n != acc_np1) {
      if (st.e_d.insert(ev->edge).second) rec.delta_times.push_back(ev->time);
      // The head enters the vertex symmetric difference unless it was
      // already occupied in the other aggregate.
      bool in_other = acc_n ? in_np1_before : in_n_before;
      if (!in_other) note_site(y);
      trace_lambda(ev->time);
    } else if (acc_n && acc_np1) {
      // Same edge accepted by both at the same event: no discrepancy, but a
      // site can leave the symmetric difference only via this path; the
      // ever-sets keep their records.
    }

    if (eng_n.diagnostics().truncation_hit ||
        eng_np1.diagnostics().truncation_hit) {
      st.gamma_hit = true;
      st.gamma_time = ev->time;
      eng_n.freeze();
      eng_np1.freeze();
    }
  }

  rec.count_at_1 = long(std::count_if(rec.delta_times.begin(),
                                      rec.delta_times.end(),
                                      [](double t) { return t <= 1.0; }));
  st.a_n = eng_n.aggregate();
  st.a_np1 = eng_np1.aggregate();
  double t_final = st.gamma_hit ? *st.gamma_time : T;
  st.a_n.set_time(t_final);
  st.a_np1.set_time(t_final);
  return {std::move(st), std::move(rec)};
}

namespace {

// Indicator-matrix classification of an edge against the seven patterns that
// can create a new discrepancy.  Returns 0 when the edge is in no class.
int classify(bool xn, bool yn, bool en, bool xp, bool yp, bool ep) {
  if (en || ep) return 0;
  if (xn && !yn && xp && !yp) return 1;   // I1
  if (xn && yn && xp && !yp) return 2;    // I2
  if (xn && !yn && !xp && !yp) return 3;  // I3
  if (xn && !yn && !xp && yp) return 4;   // I4
  if (xn && !yn && xp && yp) return 5;    // I5
  if (!xn && !yn && xp && !yp) return 6;  // I6
  if (!xn && yn && xp && !yp) return 7;   // I7
  return 0;
}

}  // namespace

LambdaDBreakdown lambda_d_breakdown(const Aggregate& a_n,
                                    const Aggregate& a_np1,
                                    const StripSolver& field_n,
                                    const StripSolver& field_np1) {
  LambdaDBreakdown out;
  std::unordered_set<DirectedEdge, EdgeHash> e_n(a_n.edges().begin(),
                                                 a_n.edges().end());
  std::unordered_set<DirectedEdge, EdgeHash> e_np1(a_np1.edges().begin(),
                                                   a_np1.edges().end());
  std::set<DirectedEdge, EdgeCanonicalLess> candidates;
  auto add_out_edges = [&candidates](const Aggregate& a) {
    for (const Site& s : a.sites()) {
      for (Dir d : {Dir::PlusX, Dir::MinusX, Dir::Up, Dir::Down}) {
        DirectedEdge e = edge_from(s, d);
        if (e.to.in_half_plane()) candidates.insert(e);
      }
    }
  };
  add_out_edges(a_n);
  add_out_edges(a_np1);

  for (const DirectedEdge& e : candidates) {
    bool xn = a_n.contains(e.from), yn = a_n.contains(e.to);
    bool xp = a_np1.contains(e.from), yp = a_np1.contains(e.to);
    int cls = classify(xn, yn, e_n.count(e) != 0, xp, yp, e_np1.count(e) != 0);
    if (cls == 0) continue;
    double term = 0.0;
    switch (cls) {
      case 1:
        term = std::fabs(field_n.edge_value(e) - field_np1.edge_value(e));
        break;
      case 2: term = field_np1.edge_value(e); break;
      case 3: term = field_n.edge_value(e); break;
      case 4: term = field_n.edge_value(e); break;
      case 5: term = field_n.edge_value(e); break;
      case 6: term = field_np1.edge_value(e); break;
      case 7: term = field_np1.edge_value(e); break;
    }
    out.by_class[size_t(cls - 1)] += term;
    out.edges_in_class[size_t(cls - 1)]++;
    out.total += term;
  }
  return out;
}

double lambda_d(const Aggregate& a_n, const Aggregate& a_np1,
                const StripSolver& field_n, const StripSolver& field_np1) {
  return lambda_d_breakdown(a_n, a_np1, field_n, field_np1).total;
}

double lambda_d(const CoupledState& st, const EngineConfig& cfg) {
  if (st.gamma_hit) fail_pre("lambda_d: state stopped at Gamma");
  auto blocked = [](const Aggregate& a) {
    std::vector<Site> out;
    for (const Site& s : a.sites())
      if (s.x2 > 0) out.push_back(s);
    return out;
  };
  BoxRegion dom = cfg.solve_domain();
  StripSolver f_n(dom, blocked(st.a_n), cfg.harmonic_tol);
  f_n.solve();
  StripSolver f_np1(dom, blocked(st.a_np1), cfg.harmonic_tol);
  f_np1.solve();
  return lambda_d(st.a_n, st.a_np1, f_n, f_np1);
}

DiscrepancyTailReport discrepancy_count_tail(int n, double T, long replicas,
                                             double alpha,
                                             const EngineConfig& cfg,
                                             uint64_t master_seed,
                                             int workers) {
  if (replicas < 100)
    fail_pre("discrepancy_count_tail: replicas must be >= 100");
  DiscrepancyTailReport rep;
  rep.n = n;
  rep.alpha = alpha;
  rep.threshold = std::pow(double(n), alpha);
  rep.replicas = replicas;

  CoupledPrototypes protos = make_coupled_prototypes(n, cfg);
  std::vector<long> counts(size_t(replicas), 0);
  std::vector<uint8_t> gamma_first(size_t(replicas), 0);

  auto work = [&](long lo, long hi) {
    for (long r = lo; r < hi; ++r) {
      EventStream stream(replica_seed(master_seed, uint64_t(r)), T,
                         cfg.c_dom);
      auto [st, rec] = run_coupled(n, T, {}, cfg, stream, &protos);
      counts[size_t(r)] = rec.count_at_1;
      gamma_first[size_t(r)] = st.gamma_hit && rec.delta_times.empty();
    }
  };
  if (workers <= 1) {
    work(0, replicas);
  } else {
    std::vector<std::thread> pool;
    long chunk = (replicas + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      long lo = w * chunk, hi = std::min(replicas, lo + chunk);
      if (lo < hi) pool.emplace_back(work, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  long maxc = 0;
  for (long c : counts) maxc = std::max(maxc, c);
  rep.histogram.assign(size_t(maxc) + 1, 0);
  for (size_t r = 0; r < counts.size(); ++r) {
    rep.histogram[size_t(counts[r])]++;
    if (double(counts[r]) >= rep.threshold) rep.exceedances++;
    if (gamma_first[r]) rep.gamma_before_first++;
  }
  rep.exceedance_fraction = double(rep.exceedances) / double(replicas);
  return rep;
}

}  // namespace sdla
