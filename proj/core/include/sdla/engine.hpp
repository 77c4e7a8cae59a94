#pragma once

// DLA engines on H: the thinned engine driven by the graphical
// representation (couplable across n through shared streams) and an
// independent exact Gillespie engine with configuration-dependent rates.

#include <memory>
#include <optional>
#include <vector>

#include "sdla/aggregate.hpp"
#include "sdla/events.hpp"
#include "sdla/harmonic.hpp"
#include "sdla/rng.hpp"

namespace sdla {

struct NSchedule {
  int multiplier = 2;
  int offset = 4;
  int of(int max_height) const { return multiplier * max_height + offset; }
};

struct EngineConfig {
  double harmonic_tol = 1e-10;
  enum class Refresh { EveryAcceptance, EveryKEvents };
  Refresh harmonic_refresh = Refresh::EveryAcceptance;
  long refresh_k = 16;  // only used by EveryKEvents
  NSchedule n_policy;
  double c_dom = 2.0;
  BoxRegion truncation{};
  HarmonicPolicy harmonic_policy;
  bool record_events = false;
  long max_attachments = 0;  // 0: unlimited; otherwise stop after this many

  void validate() const {
    if (c_dom < 1.0) fail_pre("EngineConfig: c_dom must be >= 1");
    if (harmonic_tol <= 0.0) fail_pre("EngineConfig: harmonic_tol <= 0");
    if (!truncation.valid() || truncation.y_min != 0)
      fail_pre("EngineConfig: truncation must be a box resting on L_0");
  }
  int run_N() const { return n_policy.of(truncation.y_max); }
  BoxRegion solve_domain() const {
    return harmonic_policy.domain_for_extent(truncation.x_min,
                                             truncation.x_max, run_N());
  }
};

struct EventRow {
  double event_time = 0.0;
  DirectedEdge edge{};
  bool accepted = false;
  double prob = 0.0;
  double recompute_ms = 0.0;
};

struct EngineDiagnostics {
  long events_processed = 0;
  long skipped = 0;   // x not occupied or y occupied
  long rejected = 0;
  long accepted = 0;
  long prob_violations = 0;  // acceptance probability > 1; must stay 0
  long recomputes = 0;
  long solver_sweeps = 0;
  int max_height = 0;
  bool truncation_hit = false;
  double hit_time = 0.0;
  double max_accept_prob = 0.0;
  double last_residual = 0.0;
  // N-vs-2N field check on the initial seed: max edge difference.
  double initial_field_n_error = 0.0;
  bool lambda_zero_halt = false;  // KMC only
  std::vector<EventRow> rows;     // when record_events is set
};

// Precomputed seed state shared by replica families: the solved initial
// field plus the once-per-run N-vs-2N policy error.
struct SeedPrototype {
  std::unique_ptr<StripSolver> solver;
  double n_error = 0.0;
};

// One thinned DLA process: applies the Poisson-thinning acceptance rule to
// events delivered by a caller-owned feed, so several engines can share one
// stream exactly.
class ThinnedEngine {
 public:
  ThinnedEngine(const std::vector<Site>& seed, const EngineConfig& cfg,
                const EventStream& stream,
                const SeedPrototype* warm_proto = nullptr);

  enum class Outcome { Skipped, Rejected, Accepted };

  // Processes one event; must not be called after freeze().
  Outcome handle(const EdgeEvent& ev);

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  const Aggregate& aggregate() const { return agg_; }
  Aggregate& aggregate() { return agg_; }
  const EngineDiagnostics& diagnostics() const { return diag_; }
  EngineDiagnostics& diagnostics() { return diag_; }
  const EngineConfig& config() const { return cfg_; }
  const StripSolver& solver() const { return *solver_; }

  // Current-field measure of an edge (H w.r.t. V u L_0 as of the last
  // refresh).
  double edge_measure(const DirectedEdge& e) const {
    return solver_->edge_value(e);
  }
  double acceptance_probability(const EdgeEvent& ev) const;

  bool occupies(const Site& s) const { return agg_.contains(s); }

 private:
  void refresh_field();

  EngineConfig cfg_;
  const EventStream* stream_;
  Aggregate agg_;
  std::unique_ptr<StripSolver> solver_;
  EngineDiagnostics diag_;
  bool frozen_ = false;
  long events_since_refresh_ = 0;
};

struct RunResult {
  Aggregate aggregate;
  EngineDiagnostics diagnostics;
  std::vector<Aggregate> snapshots;  // one per requested snapshot time
};

// Thinned run from a seed: deterministic given (stream, seed, cfg).
RunResult run_thinned(const std::vector<Site>& seed, double t_end,
                      const EngineConfig& cfg, const EventStream& stream,
                      const std::vector<double>& snapshot_times = {},
                      const SeedPrototype* warm_proto = nullptr);

// Exact event-driven chain whose jump rate at frontier edge e is
// H_{L_0 u V}(e); statistically equivalent in law to run_thinned.
RunResult run_kmc(const std::vector<Site>& seed, double t_end,
                  const EngineConfig& cfg, Rng& rng,
                  const std::vector<double>& snapshot_times = {},
                  const SeedPrototype* warm_proto = nullptr);

// Serialization of an aggregate to the shared file format (and back).
std::string snapshot(const Aggregate& a);
Aggregate load_snapshot(const std::string& body);

// Floor segment [-n, n] x {0}.
std::vector<Site> segment_seed(int n);

// Solves the seed field once and runs the N-vs-2N policy check; replica
// families sharing a seed start from a copy instead of a cold solve.
SeedPrototype make_seed_prototype(const std::vector<Site>& seed,
                                  const EngineConfig& cfg);

}  // namespace sdla
