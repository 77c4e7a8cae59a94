#pragma once

// Stationary harmonic measure on the upper half plane: finite-N edge, point
// and outer-point measures, extrapolation toward the N -> infinity limit, a
// Monte-Carlo estimator sharing the solver's truncated kernel, and the
// height-bound audit.
//
// H_{B,N}(x->y) sums, over sources z on the line L_N, the probability that a
// simple random walk from z first enters B u L_0 at x with previous site y.
// The solver computes the adjoint form on a truncated strip: inject unit
// mass at every free site of L_N, relax the visit-density equation
//     v(w) = mu(w) + (1/4) sum_{u ~ w, u free} v(u)
// and read every edge value as v(y)/4.  Truncation policy: the strip is
// [x_lo, x_hi] x [0, N]; sides absorb (lost mass is tracked), the top row
// reflects lazily (an up-proposal stays put), the floor and B absorb.  The
// Monte-Carlo estimator walks the identical kernel, so both routes estimate
// the same functional and their 3-sigma comparison is meaningful.

#include <optional>
#include <map>
#include <vector>

#include "sdla/aggregate.hpp"
#include "sdla/lattice.hpp"
#include "sdla/rng.hpp"

namespace sdla {

enum class HarmonicMethod { ExactSolve, MonteCarlo };

struct MassBalance {
  double total_source = 0.0;
  double edge_mass = 0.0;       // all absorption through frontier edges
  double floor_edge_mass = 0.0; // subtotal: edges whose tail is bare floor
  double side_loss = 0.0;
};

struct HarmonicField {
  std::map<DirectedEdge, double, EdgeCanonicalLess> values;
  int N = 0;
  BoxRegion domain{};
  HarmonicMethod method = HarmonicMethod::ExactSolve;
  double truncation_error_estimate = 0.0;
  std::optional<long> sample_count;
  double residual = 0.0;
  MassBalance balance{};

  double value(const DirectedEdge& e) const {
    auto it = values.find(e);
    return it == values.end() ? 0.0 : it->second;
  }
  // Point measure of x: sum of edge values out of x (same solve, exact).
  double point(const Site& x) const;
  // Outer point measure of y: sum of edge values into y.
  double outer_point(const Site& y) const;
};

struct HarmonicPolicy {
  // Default N schedule: N0 = height_multiplier * max_height(B) + height_offset,
  // then doubling.
  int height_multiplier = 2;
  int height_offset = 4;
  // Strip half-margin beyond the aggregate extent:
  //   margin_linear * N + margin_log * N * log2(N) + margin_pad.
  // The log term makes the side-truncation leak shrink with every N
  // doubling, so N-convergence sequences are not polluted by a growing
  // boundary artifact.
  int margin_linear = 4;
  double margin_log = 1.5;
  int margin_pad = 8;

  int schedule_start(int max_height) const {
    return height_multiplier * max_height + height_offset;
  }
  BoxRegion domain_for(const AggregateSet& b, int N) const;
  BoxRegion domain_for_extent(int x_min, int x_max, int N) const;
};

// Sweep-relaxation solver for the visit density on a strip.  Kept warm
// across local aggregate updates: attaching one site invalidates only a
// neighborhood, so re-solves after an attachment start from the previous
// field.
class StripSolver {
 public:
  // domain.y_max is the source line N; every free cell of that row carries a
  // unit source.  B's finite sites and the whole floor row absorb.
  StripSolver(const BoxRegion& domain, const std::vector<Site>& blocked,
              double tol = 1e-10);

  // Marks s absorbing and zeroes its cell; the next solve() is warm-started.
  void attach(const Site& s);

  // Relaxes until the residual is below tol; returns sweep count.
  // Throws Error(Numerical) with the residual on non-convergence.
  int solve();

  double visit_density(const Site& s) const;
  // v(to)/4 when from is absorbing and to is free and inside; 0 otherwise.
  double edge_value(const DirectedEdge& e) const;
  bool absorbing(const Site& s) const;
  bool in_domain(const Site& s) const { return domain_.contains(s); }

  const BoxRegion& domain() const { return domain_; }
  int source_height() const { return domain_.y_max; }
  double residual() const { return residual_; }
  long total_sweeps() const { return total_sweeps_; }

  MassBalance balance(const AggregateSet& b) const;

  // All frontier edges x->y with x absorbing, y free, restricted to tails in
  // the given horizontal window (the full domain by default).
  std::vector<std::pair<DirectedEdge, double>> frontier_edges() const;

 private:
  size_t idx(int x1, int x2) const {
    return size_t(x2) * size_t(width_) + size_t(x1 - domain_.x_min);
  }
  double cell(int x1, int x2) const;  // 0 outside / absorbing

  BoxRegion domain_;
  long width_ = 0;
  std::vector<double> v_;
  std::vector<uint8_t> blocked_;
  double tol_;
  double omega_;
  double residual_ = 0.0;
  long total_sweeps_ = 0;
  int max_sweeps_ = 2'000'000;
};

// One full solve; when estimate_truncation is set, a second solve on a strip
// with doubled horizontal margins is run, the reported values are the wide
// ones, and truncation_error_estimate is the total-mass change over the
// narrow field's keys.
HarmonicField solve_hitting_field(const AggregateSet& b, int N,
                                  const BoxRegion& domain, double tol = 1e-10,
                                  bool estimate_truncation = true);
HarmonicField solve_hitting_field(const AggregateSet& b, int N,
                                  const HarmonicPolicy& policy = {},
                                  double tol = 1e-10,
                                  bool estimate_truncation = true);

double hm_point(const AggregateSet& b, const Site& x, int N,
                const BoxRegion& domain, double tol = 1e-10);

// Mass arriving at outer-boundary point y; y must be adjacent to B's
// effective set.
double hm_outer_point(const AggregateSet& b, const Site& y, int N,
                      const BoxRegion& domain, double tol = 1e-10);

struct EdgeLimit {
  bool converged = false;
  double value = 0.0;
  int N_used = 0;
  double error_bound = 0.0;
  // +1 nondecreasing, -1 nonincreasing, 0 not monotone / too short.
  int monotone_direction = 0;
  std::vector<std::pair<int, double>> sequence;  // (N, value)
};

// Evaluates at N0, 2 N0, 4 N0, ... until successive values differ by < tol.
EdgeLimit hm_edge_limit(const AggregateSet& b, const DirectedEdge& e,
                        double tol, const HarmonicPolicy& policy = {},
                        int n_cap = 2048, double solver_tol = 1e-10);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long replicas_used = 0;
  long discarded = 0;      // step-budget exhaustion
  double discard_rate = 0.0;
  bool flagged = false;    // discard rate above 1%
};

// Reversed-path estimator of H_{B,N}(x): walks start at x with a uniformly
// chosen first step and count visits to L_N before entering B u L_0, on the
// same truncated kernel as the solver.
McEstimate mc_hm_estimate(const AggregateSet& b, const Site& x, int N,
                          long replicas, Rng& rng, const BoxRegion& domain);
McEstimate mc_hm_estimate(const AggregateSet& b, const Site& x, int N,
                          long replicas, Rng& rng,
                          const HarmonicPolicy& policy = {});

struct HeightBoundReport {
  double c_audit = 0.0;  // max over the suite of H_B(x) / sqrt(x2)
  // per-height maxima, only heights seen in the suite
  std::map<int, double> per_height_max;
  bool per_height_nonincreasing = true;
  std::vector<std::pair<int, double>> offenders;  // heights violating the trend
};

// Audits the height bound H_B(x) <= C sqrt(x2) over a suite of aggregates:
// ratios use the N-doubled field closest to the limit; limit_tol is relative
// to the field scale.
HeightBoundReport verify_height_bound(const std::vector<AggregateSet>& suite,
                                      double tol,
                                      const HarmonicPolicy& policy = {},
                                      double limit_tol = 1e-2,
                                      double solver_tol = 1e-10,
                                      int workers = 1);

// The 12-case calibration suite: floor, columns h = 1, 2, 4, four L-shapes,
// four two-tree forests.  Each case carries a probe site and a probe edge.
struct CalibrationCase {
  std::string name;
  AggregateSet set;
  Site probe_site{};
  DirectedEdge probe_edge{};
};
std::vector<CalibrationCase> calibration_suite();

// Column of height h above the origin (plus floor).
AggregateSet column_set(int h, int x1 = 0);

}  // namespace sdla
