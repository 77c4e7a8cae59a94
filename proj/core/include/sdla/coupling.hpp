#pragma once

// Coupled pair (A^n, A^{n+1}) on shared randomness with the paper-style
// truncation box, discrepancy-set tracking and the discrepancy-rate
// diagnostic.

#include <optional>
#include <set>
#include <vector>

#include "sdla/engine.hpp"

namespace sdla {

// ceil(log n), natural log, minimum 2; the truncation box height.
int log_height(int n);

// [-n - ceil(log n), n + ceil(log n)] x [0, ceil(log n)].
BoxRegion coupling_box(int n);

struct CoupledState {
  Aggregate a_n;
  Aggregate a_np1;
  int n = 0;
  bool gamma_hit = false;
  std::optional<double> gamma_time;
  std::set<Site, SiteCanonicalLess> v_d;          // ever in V^n triangle V^{n+1}
  std::set<DirectedEdge, EdgeCanonicalLess> e_d;  // ever in E^n triangle E^{n+1}
};

struct DiscrepancyRecord {
  std::vector<double> delta_times;  // times Delta_i at which |E_D| hit i
  long count_at_1 = 0;              // |E^{D,n}_1|
  std::vector<int> disagreed;       // per supplied window: contents differed
  std::vector<std::pair<double, double>> lambda_d_trace;  // (time, lambda^D)
};

struct CoupledPrototypes {
  SeedPrototype proto_n;
  SeedPrototype proto_np1;
};

struct CouplingOptions {
  bool trace_lambda_d = false;  // evaluate lambda^D at t=0 and each Delta_i
};

CoupledPrototypes make_coupled_prototypes(int n, const EngineConfig& cfg);

// Advances both thinned engines against the same event stream; each engine
// applies its own acceptance field to the same mark.  Gamma fires when
// either aggregate leaves the box; both engines freeze at Gamma.
std::pair<CoupledState, DiscrepancyRecord> run_coupled(
    int n, double T, const std::vector<BoxRegion>& windows,
    const EngineConfig& cfg, const EventStream& stream,
    const CoupledPrototypes* protos = nullptr,
    const CouplingOptions& opts = {});

// Engine configuration for the coupled pair at a given n (paper box, shared
// numeric policy).
EngineConfig coupling_config(int n, double c_dom = 2.0);

// The instantaneous rate at which a new edge discrepancy appears, decomposed
// over the seven indicator-matrix edge classes.  Diagnostic only.  Needs the
// two engines' current exact fields.
double lambda_d(const Aggregate& a_n, const Aggregate& a_np1,
                const StripSolver& field_n, const StripSolver& field_np1);

// Same, from a stored state: solves both exact fields afresh with the run's
// numeric policy.  The state must not be stopped at Gamma.
double lambda_d(const CoupledState& st, const EngineConfig& cfg);

// Per-class decomposition, classes E1..E7 in paper order.
struct LambdaDBreakdown {
  double total = 0.0;
  std::array<double, 7> by_class{};
  std::array<long, 7> edges_in_class{};
};
LambdaDBreakdown lambda_d_breakdown(const Aggregate& a_n,
                                    const Aggregate& a_np1,
                                    const StripSolver& field_n,
                                    const StripSolver& field_np1);

struct DiscrepancyTailReport {
  int n = 0;
  double alpha = 0.0;
  double threshold = 0.0;  // n^alpha
  long replicas = 0;
  long exceedances = 0;
  double exceedance_fraction = 0.0;
  std::vector<long> histogram;  // histogram[k] = #replicas with |E_D,1| == k
  long gamma_before_first = 0;  // replicas where Gamma fired with E_D empty
};

// Empirical distribution of |E^{D,n}_1| across replicas; uses replica seeds
// mix(master_seed, index).
DiscrepancyTailReport discrepancy_count_tail(int n, double T, long replicas,
                                             double alpha,
                                             const EngineConfig& cfg,
                                             uint64_t master_seed,
                                             int workers = 1);

}  // namespace sdla
