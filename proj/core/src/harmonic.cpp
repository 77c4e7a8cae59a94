#include "sdla/harmonic.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "sdla/stats.hpp"
#include "sdla/walk.hpp"

namespace sdla {

double HarmonicField::point(const Site& x) const {
  double sum = 0.0;
  for (Dir d : {Dir::PlusX, Dir::MinusX, Dir::Up, Dir::Down}) {
    Site y = step(x, d);
    if (!y.in_half_plane()) continue;
    sum += value({x, y});
  }
  return sum;
}

double HarmonicField::outer_point(const Site& y) const {
  double sum = 0.0;
  for (Dir d : {Dir::PlusX, Dir::MinusX, Dir::Up, Dir::Down}) {
    Site x = step(y, d);
    if (!x.in_half_plane()) continue;
    sum += value({x, y});
  }
  return sum;
}

BoxRegion HarmonicPolicy::domain_for_extent(int x_min, int x_max,
                                            int N) const {
  double lg = std::log2(std::max(2.0, double(N)));
  int margin = margin_linear * N + int(margin_log * N * lg) + margin_pad;
  return BoxRegion{x_min - margin, x_max + margin, 0, N};
}

BoxRegion HarmonicPolicy::domain_for(const AggregateSet& b, int N) const {
  int lo = 0, hi = 0;
  if (!b.empty()) {
    lo = b.min_x1();
    hi = b.max_x1();
  }
  return domain_for_extent(lo - 2, hi + 2, N);
}

StripSolver::StripSolver(const BoxRegion& domain,
                         const std::vector<Site>& blocked, double tol)
    : domain_(domain), tol_(tol) {
  if (!domain.valid() || domain.y_min != 0)
    fail_pre("StripSolver: domain must be [x_lo,x_hi] x [0,N]");
  if (domain.y_max < 1) fail_pre("StripSolver: N must be >= 1");
  width_ = domain.width();
  size_t cells = size_t(width_) * size_t(domain.height());
  v_.assign(cells, 0.0);
  blocked_.assign(cells, 0);
  for (long x = 0; x < width_; ++x) blocked_[x] = 1;  // floor row
  for (const Site& s : blocked) {
    if (s.x2 == 0) continue;  // floor is already absorbing
    if (!domain.contains(s))
      fail_pre("StripSolver: blocked site outside domain " + s.str());
    if (s.x2 >= domain.y_max)
      fail_pre("StripSolver: N must exceed the max height of B");
    blocked_[idx(s.x1, s.x2)] = 1;
  }
  // SOR factor from the grid dimensions (Jacobi radius of the strip with an
  // absorbing bottom and reflecting top).
  double rj = 0.5 * (std::cos(M_PI / double(width_ + 1)) +
                     std::cos(M_PI / double(2 * domain.height() + 1)));
  omega_ = 2.0 / (1.0 + std::sqrt(std::max(0.0, 1.0 - rj * rj)));
  omega_ = std::clamp(omega_, 1.0, 1.95);
}

void StripSolver::attach(const Site& s) {
  if (!domain_.contains(s)) fail_pre("StripSolver::attach outside domain");
  if (s.x2 >= domain_.y_max)
    fail_pre("StripSolver::attach at or above the source line");
  size_t i = idx(s.x1, s.x2);
  blocked_[i] = 1;
  v_[i] = 0.0;
}

double StripSolver::cell(int x1, int x2) const {
  if (x1 < domain_.x_min || x1 > domain_.x_max || x2 < 0 || x2 > domain_.y_max)
    return 0.0;
  size_t i = idx(x1, x2);
  return blocked_[i] ? 0.0 : v_[i];
}

int StripSolver::solve() {
  const int N = domain_.y_max;
  const int xlo = domain_.x_min, xhi = domain_.x_max;
  double omega = omega_;
  int sweeps = 0;
  double maxdiff = 0.0;
  for (; sweeps < max_sweeps_; ++sweeps) {
    maxdiff = 0.0;
    for (int y = 1; y <= N; ++y) {
      const double mu = (y == N) ? 1.0 : 0.0;
      const bool top = (y == N);
      size_t row = size_t(y) * size_t(width_);
      size_t below = row - size_t(width_);
      for (int x = xlo; x <= xhi; ++x) {
        size_t i = row + size_t(x - xlo);
        if (blocked_[i]) continue;
        double left = (x > xlo && !blocked_[i - 1]) ? v_[i - 1] : 0.0;
        double right = (x < xhi && !blocked_[i + 1]) ? v_[i + 1] : 0.0;
        size_t bi = below + size_t(x - xlo);
        double down = blocked_[bi] ? 0.0 : v_[bi];
        double target;
        if (top) {
          target = (mu + 0.25 * (left + right + down)) / 0.75;
        } else {
          size_t ai = i + size_t(width_);
          double up = blocked_[ai] ? 0.0 : v_[ai];
          target = mu + 0.25 * (left + right + down + up);
        }
        double diff = target - v_[i];
        if (std::fabs(diff) > maxdiff) maxdiff = std::fabs(diff);
        v_[i] += omega * diff;
      }
    }
    if (maxdiff < tol_) {
      // Verify with a plain Gauss-Seidel residual pass; SOR increments can
      // undershoot the true residual.
      double res = 0.0;
      for (int y = 1; y <= N; ++y) {
        const double mu = (y == N) ? 1.0 : 0.0;
        for (int x = xlo; x <= xhi; ++x) {
          size_t i = idx(x, y);
          if (blocked_[i]) continue;
          double nb = cell(x - 1, y) + cell(x + 1, y) + cell(x, y - 1);
          double target = (y == N) ? (mu + 0.25 * nb) / 0.75
                                   : mu + 0.25 * (nb + cell(x, y + 1));
          res = std::max(res, std::fabs(target - v_[i]));
        }
      }
      residual_ = res;
      if (res < tol_) {
        total_sweeps_ += sweeps + 1;
        return sweeps + 1;
      }
    }
  }
  residual_ = maxdiff;
  fail_num("StripSolver: no convergence within sweep cap, residual " +
           std::to_string(maxdiff) + ", domain " + domain_.str());
}

double StripSolver::visit_density(const Site& s) const {
  return cell(s.x1, s.x2);
}

bool StripSolver::absorbing(const Site& s) const {
  if (s.x2 == 0) return true;
  if (!domain_.contains(s)) return false;
  return blocked_[idx(s.x1, s.x2)] != 0;
}

double StripSolver::edge_value(const DirectedEdge& e) const {
  if (!e.nearest_neighbor()) return 0.0;
  if (!e.from.in_half_plane() || !e.to.in_half_plane()) return 0.0;
  if (!absorbing(e.from)) return 0.0;
  if (!domain_.contains(e.to)) return 0.0;
  if (blocked_[idx(e.to.x1, e.to.x2)]) return 0.0;
  return 0.25 * v_[idx(e.to.x1, e.to.x2)];
}

MassBalance StripSolver::balance(const AggregateSet& b) const {
  MassBalance m;
  const int N = domain_.y_max;
  for (int x = domain_.x_min; x <= domain_.x_max; ++x)
    if (!blocked_[idx(x, N)]) m.total_source += 1.0;
  for (int y = 1; y <= N; ++y) {
    for (int x = domain_.x_min; x <= domain_.x_max; ++x) {
      size_t i = idx(x, y);
      if (blocked_[i]) continue;
      double v = v_[i];
      if (v == 0.0) continue;
      Site here{x, y};
      for (Dir d : {Dir::PlusX, Dir::MinusX, Dir::Up, Dir::Down}) {
        Site to = step(here, d);
        if (to.x1 < domain_.x_min || to.x1 > domain_.x_max) {
          m.side_loss += 0.25 * v;
        } else if (to.x2 > N) {
          // reflecting top: no loss
        } else if (absorbing(to)) {
          m.edge_mass += 0.25 * v;
          if (to.x2 == 0 && !b.contains(to)) m.floor_edge_mass += 0.25 * v;
        }
      }
    }
  }
  return m;
}

std::vector<std::pair<DirectedEdge, double>> StripSolver::frontier_edges()
    const {
  std::vector<std::pair<DirectedEdge, double>> out;
  const int N = domain_.y_max;
  for (int y = 1; y <= N; ++y) {
    for (int x = domain_.x_min; x <= domain_.x_max; ++x) {
      size_t i = idx(x, y);
      if (blocked_[i] || v_[i] == 0.0) continue;
      Site here{x, y};
      for (Dir d : {Dir::PlusX, Dir::MinusX, Dir::Up, Dir::Down}) {
        Site from = step(here, d);
        if (!from.in_half_plane()) continue;
        if (from.x1 < domain_.x_min || from.x1 > domain_.x_max) continue;
        if (from.x2 > N) continue;
        if (absorbing(from)) out.push_back({{from, here}, 0.25 * v_[i]});
      }
    }
  }
  return out;
}

namespace {

void check_solve_preconditions(const AggregateSet& b, int N,
                               const BoxRegion& domain) {
  if (N <= b.max_height())
    fail_pre("solve_hitting_field: N must exceed the max height of B");
  if (domain.y_max != N)
    fail_pre("solve_hitting_field: domain top must be the source line L_N");
  for (const Site& s : b.sites())
    if (!domain.contains(s))
      fail_pre("solve_hitting_field: domain must contain B");
}

HarmonicField extract_field(const StripSolver& solver, const AggregateSet& b,
                            int N) {
  HarmonicField f;
  f.N = N;
  f.domain = solver.domain();
  f.method = HarmonicMethod::ExactSolve;
  f.residual = solver.residual();
  for (auto& [e, val] : solver.frontier_edges()) f.values.emplace(e, val);
  f.balance = solver.balance(b);
  return f;
}

}  // namespace

HarmonicField solve_hitting_field(const AggregateSet& b, int N,
                                  const BoxRegion& domain, double tol,
                                  bool estimate_truncation) {
  check_solve_preconditions(b, N, domain);
  StripSolver narrow(domain, b.sites(), tol);
  narrow.solve();
  HarmonicField nf = extract_field(narrow, b, N);
  if (!estimate_truncation) return nf;

  // Re-solve with doubled horizontal margins; report the wide values.
  long margin = (domain.width() - 1) / 2;
  BoxRegion wide{int(domain.x_min - margin), int(domain.x_max + margin), 0, N};
  StripSolver ws(wide, b.sites(), tol);
  ws.solve();
  HarmonicField wf = extract_field(ws, b, N);

  double mass_change = 0.0;
  for (const auto& [e, val] : nf.values)
    mass_change += std::fabs(wf.value(e) - val);
  // Restrict the reported field to the narrow span so the key set does not
  // depend on the audit margin.
  HarmonicField out;
  out.N = N;
  out.domain = domain;
  out.method = HarmonicMethod::ExactSolve;
  out.residual = std::max(nf.residual, wf.residual);
  out.truncation_error_estimate = mass_change;
  out.balance = wf.balance;
  for (const auto& [e, val] : wf.values)
    if (domain.contains(e.from)) out.values.emplace(e, val);
  return out;
}

HarmonicField solve_hitting_field(const AggregateSet& b, int N,
                                  const HarmonicPolicy& policy, double tol,
                                  bool estimate_truncation) {
  return solve_hitting_field(b, N, policy.domain_for(b, N), tol,
                             estimate_truncation);
}

double hm_point(const AggregateSet& b, const Site& x, int N,
                const BoxRegion& domain, double tol) {
  if (!b.effective_contains(x)) fail_pre("hm_point: x not in effective B");
  HarmonicField f = solve_hitting_field(b, N, domain, tol, false);
  return f.point(x);
}

double hm_outer_point(const AggregateSet& b, const Site& y, int N,
                      const BoxRegion& domain, double tol) {
  if (b.effective_contains(y)) fail_pre("hm_outer_point: y inside B");
  bool adjacent = false;
  for (const Site& nb : neighbors(y))
    if (b.effective_contains(nb)) adjacent = true;
  if (!adjacent) fail_pre("hm_outer_point: y not adjacent to B");
  HarmonicField f = solve_hitting_field(b, N, domain, tol, false);
  return f.outer_point(y);
}

EdgeLimit hm_edge_limit(const AggregateSet& b, const DirectedEdge& e,
                        double tol, const HarmonicPolicy& policy, int n_cap,
                        double solver_tol) {
  if (!b.effective_contains(e.from) || b.effective_contains(e.to))
    fail_pre("hm_edge_limit: e is not a frontier edge of B");
  EdgeLimit out;
  int N = policy.schedule_start(b.max_height());
  double prev = 0.0;
  bool have_prev = false;
  while (N <= n_cap) {
    HarmonicField f =
        solve_hitting_field(b, N, policy.domain_for(b, N), solver_tol, false);
    double v = f.value(e);
    out.sequence.push_back({N, v});
    if (have_prev) {
      double inc = std::fabs(v - prev);
      out.error_bound = inc;
      if (inc < tol) {
        out.converged = true;
        out.value = v;
        out.N_used = N;
        break;
      }
    }
    prev = v;
    have_prev = true;
    N *= 2;
  }
  if (!out.converged && !out.sequence.empty()) {
    out.value = out.sequence.back().second;
    out.N_used = out.sequence.back().first;
  }
  // Empirical monotonicity direction of the recorded sequence.
  bool nondec = true, noninc = true;
  for (size_t i = 1; i < out.sequence.size(); ++i) {
    if (out.sequence[i].second < out.sequence[i - 1].second) nondec = false;
    if (out.sequence[i].second > out.sequence[i - 1].second) noninc = false;
  }
  if (out.sequence.size() >= 2)
    out.monotone_direction = nondec ? 1 : (noninc ? -1 : 0);
  return out;
}

McEstimate mc_hm_estimate(const AggregateSet& b, const Site& x, int N,
                          long replicas, Rng& rng, const BoxRegion& domain) {
  if (replicas <= 0) fail_pre("mc_hm_estimate: replicas must be positive");
  if (!b.effective_contains(x)) fail_pre("mc_hm_estimate: x not in B");
  if (N <= x.x2) fail_pre("mc_hm_estimate: N must exceed the height of x");
  if (domain.y_max != N) fail_pre("mc_hm_estimate: domain top must be L_N");

  auto absorbing = [&b](const Site& s) { return b.effective_contains(s); };
  auto counting = [N](const Site& s) { return s.x2 == N; };
  WalkOptions opts;
  opts.allow_zero_steps = false;
  opts.reflect_top = true;

  Accumulator acc;
  long discarded = 0;
  for (long r = 0; r < replicas; ++r) {
    // Uniform first step; a proposal below L_0 from a floor start is an
    // immediate absorption with zero visits.
    Dir d = Dir(rng.next_uint(4));
    Site first = step(x, d);
    if (!first.in_half_plane()) {
      acc.add(0.0);
      continue;
    }
    if (first.x1 < domain.x_min || first.x1 > domain.x_max) {
      acc.add(0.0);
      continue;
    }
    if (absorbing(first)) {
      acc.add(0.0);
      continue;
    }
    WalkOutcome w = run_walk(first, absorbing, domain, counting, rng, opts);
    if (w.status == WalkStatus::Budget) {
      discarded++;
      continue;
    }
    // Absorbed or lost through a side: both terminate the count.
    acc.add(double(w.visits_counted));
  }
  McEstimate est;
  est.mean = acc.mean();
  est.std_error = acc.std_error();
  est.replicas_used = acc.count();
  est.discarded = discarded;
  est.discard_rate = double(discarded) / double(replicas);
  est.flagged = est.discard_rate > 0.01;
  return est;
}

McEstimate mc_hm_estimate(const AggregateSet& b, const Site& x, int N,
                          long replicas, Rng& rng,
                          const HarmonicPolicy& policy) {
  return mc_hm_estimate(b, x, N, replicas, rng, policy.domain_for(b, N));
}

HeightBoundReport verify_height_bound(const std::vector<AggregateSet>& suite,
                                      double tol, const HarmonicPolicy& policy,
                                      double limit_tol, double solver_tol,
                                      int workers) {
  HeightBoundReport rep;
  std::vector<std::map<int, double>> per_case(suite.size());

  auto audit_case = [&](size_t ci) {
    const AggregateSet& b = suite[ci];
    if (b.sites().empty()) return;  // floor only: bound concerns x2 >= 1
    // Double N until the max point-value increment over B is below
    // limit_tol (relative to the field scale), then audit the last field.
    int N = policy.schedule_start(b.max_height());
    HarmonicField last;
    std::map<Site, double, SiteCanonicalLess> prev_pts;
    while (true) {
      HarmonicField f =
          solve_hitting_field(b, N, policy.domain_for(b, N), solver_tol, false);
      double inc = 0.0, scale = 0.0;
      std::map<Site, double, SiteCanonicalLess> pts;
      for (const Site& s : b.sites()) {
        if (s.x2 < 1) continue;
        double p = f.point(s);
        pts[s] = p;
        scale = std::max(scale, std::fabs(p));
        if (prev_pts.count(s)) inc = std::max(inc, std::fabs(p - prev_pts[s]));
      }
      last = std::move(f);
      if (!prev_pts.empty() && inc < limit_tol * std::max(scale, 1e-12)) break;
      prev_pts = std::move(pts);
      N *= 2;
      if (N > 4096) fail_num("verify_height_bound: N cap exceeded");
    }
    for (const Site& s : b.sites()) {
      if (s.x2 < 1) continue;
      double ratio = last.point(s) / std::sqrt(double(s.x2));
      auto it = per_case[ci].find(s.x2);
      if (it == per_case[ci].end())
        per_case[ci][s.x2] = ratio;
      else
        it->second = std::max(it->second, ratio);
    }
  };

  if (workers <= 1) {
    for (size_t ci = 0; ci < suite.size(); ++ci) audit_case(ci);
  } else {
    std::atomic<long> next{0};
    auto lane = [&]() {
      while (true) {
        long i = next.fetch_add(1);
        if (i >= long(suite.size())) return;
        audit_case(size_t(i));
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(lane);
    for (auto& th : pool) th.join();
  }
  for (const auto& m : per_case) {
    for (const auto& [h, ratio] : m) {
      rep.c_audit = std::max(rep.c_audit, ratio);
      auto it = rep.per_height_max.find(h);
      if (it == rep.per_height_max.end())
        rep.per_height_max[h] = ratio;
      else
        it->second = std::max(it->second, ratio);
    }
  }
  double prev = -1.0;
  for (const auto& [h, r] : rep.per_height_max) {
    if (prev >= 0.0 && r > prev * (1.0 + tol)) {
      rep.per_height_nonincreasing = false;
      rep.offenders.push_back({h, r});
    }
    prev = r;
  }
  return rep;
}

AggregateSet column_set(int h, int x1) {
  std::vector<Site> sites;
  for (int k = 1; k <= h; ++k) sites.push_back({x1, k});
  return AggregateSet(sites, true);
}

std::vector<CalibrationCase> calibration_suite() {
  std::vector<CalibrationCase> suite;
  auto add = [&suite](std::string name, std::vector<Site> sites, Site probe,
                      DirectedEdge pe) {
    suite.push_back({std::move(name), AggregateSet(std::move(sites), true),
                     probe, pe});
  };

  add("floor", {}, {0, 0}, {{0, 0}, {0, 1}});
  add("column_h1", {{0, 1}}, {0, 1}, {{0, 1}, {0, 2}});
  add("column_h2", {{0, 1}, {0, 2}}, {0, 2}, {{0, 2}, {0, 3}});
  add("column_h4", {{0, 1}, {0, 2}, {0, 3}, {0, 4}}, {0, 4},
      {{0, 4}, {0, 5}});

  // L-shapes: a column with a horizontal arm.
  add("L_h2_arm2", {{0, 1}, {0, 2}, {1, 2}, {2, 2}}, {2, 2}, {{2, 2}, {3, 2}});
  add("L_h3_arm1", {{0, 1}, {0, 2}, {0, 3}, {1, 3}}, {1, 3}, {{1, 3}, {1, 4}});
  add("L_h4_arm2", {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 4}, {2, 4}}, {2, 4},
      {{2, 4}, {2, 5}});
  add("L_h2_arm3_low", {{0, 1}, {0, 2}, {-1, 1}, {-2, 1}, {-3, 1}}, {-3, 1},
      {{-3, 1}, {-3, 2}});

  // Two-tree forests: separated columns of unequal heights.
  add("forest_1_1_gap4", {{0, 1}, {4, 1}}, {4, 1}, {{4, 1}, {4, 2}});
  add("forest_2_1_gap3", {{0, 1}, {0, 2}, {3, 1}}, {0, 2}, {{0, 2}, {0, 3}});
  add("forest_3_2_gap6", {{0, 1}, {0, 2}, {0, 3}, {6, 1}, {6, 2}}, {0, 3},
      {{0, 3}, {0, 4}});
  add("forest_2_2_gap2", {{0, 1}, {0, 2}, {2, 1}, {2, 2}}, {2, 2},
      {{2, 2}, {3, 2}});

  return suite;
}

}  // namespace sdla
