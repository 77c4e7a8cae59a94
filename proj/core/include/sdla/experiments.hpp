#pragma once

// Batch orchestration: experiment families behind the CLI subcommands,
// replica scheduling with deterministic merges, persistent run records.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdla/coupling.hpp"
#include "sdla/engine.hpp"
#include "sdla/harmonic.hpp"
#include "sdla/stats.hpp"

namespace sdla {

// ---------------------------------------------------------------------------
// Configuration: flat key-value file plus overrides; every key has a
// documented default at its point of use.

class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig from_file(const std::string& path);

  void set(const std::string& key, const std::string& value) {
    kv_[key] = value;
  }
  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get(const std::string& key, const std::string& def) const;
  long get_long(const std::string& key, long def) const;
  double get_double(const std::string& key, double def) const;
  std::vector<long> get_longs(const std::string& key,
                              const std::vector<long>& def) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

struct WindowSpec {
  BoxRegion box;
  std::string id;
};

// ---------------------------------------------------------------------------
// Output plumbing.

std::string fmt_g(double x);  // deterministic %.12g

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);
  void close();
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::string buffer_;
  bool closed_ = false;
};

// Run record: config echo, code version, wall times, output digests and a
// summary, written atomically at run end.
struct RunRecord {
  std::map<std::string, std::string> config_echo;
  std::string code_version;
  long started_unix = 0;
  long finished_unix = 0;
  std::map<std::string, std::string> output_digests;  // file -> hex digest
  std::map<std::string, std::string> summary;
};

void write_run_record(const std::string& path, const RunRecord& rec);
RunRecord load_run_record(const std::string& path);
// Recomputes digests of the recorded outputs (paths relative to the record's
// directory) and compares.
bool verify_run_record(const std::string& path);

std::string code_version();

// Deterministic replica map: worker lanes share nothing but the config and
// results are merged by replica index, so parallelism never changes bytes.
void parallel_for(long count, int workers,
                  const std::function<void(long)>& body);

// ---------------------------------------------------------------------------
// harmonic: solver / estimator / limit / bound audit on an aggregate file.

struct HarmonicCmd {
  std::string aggregate_path;  // empty: floor only
  int N = 0;                   // 0: policy default
  std::vector<long> n_sequence;
  bool method_exact = true;
  bool method_mc = false;
  long mc_replicas = 100000;
  double tol = 1e-10;
  bool bound_audit = false;
  uint64_t master_seed = 1;
  std::string out_dir = ".";
};

struct HarmonicCmdReport {
  std::string field_csv;
  std::string convergence_csv;
  double mc_mean = 0.0, mc_se = 0.0, exact_point = 0.0, z_score = 0.0;
  double c_audit = 0.0;
  std::vector<std::string> outputs;
};

HarmonicCmdReport run_harmonic_cmd(const HarmonicCmd& cfg);

// Emits a solved field as CSV with columns
// (edge_from_x1, edge_from_x2, edge_to_x1, edge_to_x2, N, value, err_est,
//  method).
void write_field_csv(const std::string& path, const HarmonicField& f);

// ---------------------------------------------------------------------------
// interface-tail: tail table with the dominating-envelope column, plus
// box-escape frequencies.

struct InterfaceTailCmd {
  long replicas = 10000;
  long envelope_samples = 1000000;
  int k_max = 8;
  std::vector<long> escape_ns = {8, 16, 32};
  long escape_replicas = 500;
  uint64_t master_seed = 1;
  int workers = 1;
  std::string out_dir = ".";
};

struct TailRow {
  int k = 0;
  double p_ge = 0.0;         // P(||I||_2 >= k); 1 at k = 0 by construction
  double p_gt = 0.0;         // P(||I||_2 > k); the envelope applies to this
  double p_se = 0.0;         // binomial SE of p_gt
  double envelope = 0.0;     // min(1, 4^k P(sum T_i < 1))
  double envelope_se = 0.0;  // MC error of the P factor, scaled
  bool violated = false;     // p_gt > envelope beyond 3 sigma
};

struct InterfaceTailReport {
  std::vector<TailRow> rows;
  std::vector<std::pair<long, WilsonInterval>> escape;  // n -> frequency
  std::vector<std::string> outputs;
};

InterfaceTailReport run_interface_tail(const InterfaceTailCmd& cfg);

// ---------------------------------------------------------------------------
// dla: engine runs with snapshot and diagnostics emission.

struct DlaCmd {
  int n = 8;             // floor segment seed [-n, n]
  double t_end = 1.0;
  std::string engine = "thinned";  // thinned | kmc | both
  long replicas = 1;
  double c_dom = 2.0;
  int box_height = 0;    // 0: 4 * log-height default
  uint64_t master_seed = 1;
  int workers = 1;
  bool record_events = false;
  std::string out_dir = ".";
};

struct DlaReport {
  std::vector<long> attached_per_replica;
  std::vector<int> max_height_per_replica;
  long truncation_hits = 0;
  long prob_violations = 0;
  std::vector<std::string> outputs;
};

DlaReport run_dla_cmd(const DlaCmd& cfg);

EngineConfig dla_config(int n, double c_dom, int box_height);

// ---------------------------------------------------------------------------
// couple: replica CSV over the coupled pair.

struct CoupleCmd {
  int n = 8;
  double T = 1.0;
  long replicas = 100;
  std::vector<WindowSpec> windows;
  double c_dom = 2.0;
  uint64_t master_seed = 1;
  int workers = 1;
  std::string out_dir = ".";
};

struct CoupleReplicaRow {
  uint64_t replica_seed = 0;
  bool gamma_hit = false;
  double gamma_time = 0.0;  // -1 when not hit
  long count_at_1 = 0;
  std::vector<int> disagreed;
};

struct CoupleReport {
  std::vector<CoupleReplicaRow> rows;
  std::vector<WilsonInterval> disagreement;  // per window
  std::vector<std::string> outputs;
};

CoupleReport run_couple_cmd(const CoupleCmd& cfg);

// ---------------------------------------------------------------------------
// locality: decay of window disagreement over n, plus matched-seed field
// stabilization.

struct LocalityCmd {
  std::vector<long> ns = {4, 8, 16, 32};
  long replicas = 1000;
  BoxRegion window{-2, 2, 0, 2};
  double T = 1.0;
  double c_dom = 2.0;
  long stabilization_pairs = 16;  // matched-seed A^n vs A^{2n} field checks
  uint64_t master_seed = 1;
  int workers = 1;
  std::string out_dir = ".";
};

struct LocalityRow {
  long n = 0;
  WilsonInterval p;       // disagreement probability by T
  double field_max_diff = -1.0;  // matched-seed max |H difference| on window
};

struct LocalityReport {
  std::vector<LocalityRow> rows;
  double loglog_slope = 0.0;  // fitted on positive p_hat rows
  bool nonincreasing_ci = true;
  bool strict_last_below_first = false;
  std::vector<std::string> outputs;
};

LocalityReport run_locality_cmd(const LocalityCmd& cfg);

// ---------------------------------------------------------------------------
// stationarity: occupation probabilities under horizontal shift and mirror.

struct StationarityCmd {
  int n = 64;
  double T = 1.0;
  long replicas = 1000;
  std::vector<Site> probes = {{0, 1}, {5, 1}};
  int shift = 5;
  double c_dom = 2.0;
  uint64_t master_seed = 1;
  int workers = 1;
  std::string out_dir = ".";
};

struct StationarityRow {
  Site site{};
  Site shifted{};
  long occ_base = 0, occ_shifted = 0, occ_mirror = 0;
  double z_shift = 0.0;
  double z_mirror = 0.0;
};

struct StationarityReport {
  long replicas = 0;
  std::vector<StationarityRow> rows;
  double max_abs_z_shift = 0.0;
  double max_abs_z_mirror = 0.0;
  std::vector<std::string> outputs;
};

StationarityReport run_stationarity_cmd(const StationarityCmd& cfg);

// ---------------------------------------------------------------------------
// mixing: window-indicator correlation against separation, the radius event
// frequency, and the structural disjointness check on local copies.

struct MixingCmd {
  int n = 128;
  double T = 1.0;
  long replicas = 1000;
  std::vector<long> separations = {8, 16, 32};
  double c_dom = 2.0;
  uint64_t master_seed = 1;
  int workers = 1;
  std::string out_dir = ".";
};

struct MixingRow {
  long separation = 0;
  CorrelationCI corr;        // indicator correlation on the big run
  long qualifying = 0;       // replicas with both radius events
  long disjoint_ok = 0;      // qualifying replicas with disjoint edges
  WilsonInterval radius_event_freq;
};

struct MixingReport {
  std::vector<MixingRow> rows;
  bool all_disjoint = true;
  bool nonincreasing_ci = true;
  std::vector<std::string> outputs;
};

MixingReport run_mixing_cmd(const MixingCmd& cfg);

}  // namespace sdla
