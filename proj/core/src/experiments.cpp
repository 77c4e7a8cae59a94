#include "sdla/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sdla/version.hpp"

namespace sdla {

// ---------------------------------------------------------------------------
// configuration

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail_pre("config: cannot open " + path);
  KeyValueConfig cfg;
  std::string line;
  long lineno = 0;
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(f, line)) {
    lineno++;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      fail_pre("config: line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (key.empty())
      fail_pre("config: line " + std::to_string(lineno) + ": empty key");
    cfg.kv_[key] = val;
  }
  return cfg;
}

std::string KeyValueConfig::get(const std::string& key,
                                const std::string& def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : it->second;
}

long KeyValueConfig::get_long(const std::string& key, long def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    return std::stol(it->second);
  } catch (...) {
    fail_pre("config: key '" + key + "' is not an integer: " + it->second);
  }
}

double KeyValueConfig::get_double(const std::string& key, double def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    return std::stod(it->second);
  } catch (...) {
    fail_pre("config: key '" + key + "' is not a number: " + it->second);
  }
}

std::vector<long> KeyValueConfig::get_longs(const std::string& key,
                                            const std::vector<long>& def)
    const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  std::vector<long> out;
  std::stringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stol(tok));
    } catch (...) {
      fail_pre("config: key '" + key + "' has a bad entry: " + tok);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// output plumbing

std::string fmt_g(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path,
                     const std::vector<std::string>& header)
    : path_(path) {
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) buffer_ += ',';
    buffer_ += cells[i];
  }
  buffer_ += '\n';
}

void CsvWriter::close() {
  if (closed_) return;
  std::ofstream f(path_, std::ios::binary);
  if (!f) fail_pre("cannot open for write: " + path_);
  f << buffer_;
  if (!f) fail_num("write failed: " + path_);
  closed_ = true;
}

std::string code_version() { return kVersion; }

namespace {

std::string hex64(uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
  return buf;
}

std::string dirname_of(const std::string& path) {
  size_t slash = path.find_last_of('/');
  return slash == std::string::npos ? std::string(".") : path.substr(0, slash);
}

std::string basename_of(const std::string& path) {
  size_t slash = path.find_last_of('/');
  return slash == std::string::npos ? path : path.substr(slash + 1);
}

}  // namespace

void write_run_record(const std::string& path, const RunRecord& rec) {
  nlohmann::ordered_json j;
  j["code_version"] = rec.code_version;
  j["started_unix"] = rec.started_unix;
  j["finished_unix"] = rec.finished_unix;
  j["config"] = rec.config_echo;
  j["outputs"] = rec.output_digests;
  j["summary"] = rec.summary;
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) fail_pre("cannot open for write: " + tmp);
    f << j.dump(2) << "\n";
    if (!f) fail_num("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    fail_num("atomic rename failed for " + path);
}

RunRecord load_run_record(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_pre("cannot open run record: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::parse_error& e) {
    fail_pre(std::string("run record: ") + e.what());
  }
  RunRecord rec;
  rec.code_version = j.value("code_version", "");
  rec.started_unix = j.value("started_unix", 0L);
  rec.finished_unix = j.value("finished_unix", 0L);
  if (j.contains("config"))
    for (auto& [k, v] : j["config"].items())
      rec.config_echo[k] = v.get<std::string>();
  if (j.contains("outputs"))
    for (auto& [k, v] : j["outputs"].items())
      rec.output_digests[k] = v.get<std::string>();
  if (j.contains("summary"))
    for (auto& [k, v] : j["summary"].items())
      rec.summary[k] = v.get<std::string>();
  return rec;
}

bool verify_run_record(const std::string& path) {
  RunRecord rec = load_run_record(path);
  std::string dir = dirname_of(path);
  for (const auto& [file, digest] : rec.output_digests) {
    if (hex64(file_digest(dir + "/" + file)) != digest) return false;
  }
  return true;
}

namespace {

class RecordBuilder {
 public:
  explicit RecordBuilder(std::string out_dir, std::string name)
      : out_dir_(std::move(out_dir)), name_(std::move(name)) {
    rec_.code_version = code_version();
    rec_.started_unix = long(std::time(nullptr));
  }
  void echo(const std::string& k, const std::string& v) {
    rec_.config_echo[k] = v;
  }
  void output(const std::string& path) {
    rec_.output_digests[basename_of(path)] = hex64(file_digest(path));
  }
  void summary(const std::string& k, const std::string& v) {
    rec_.summary[k] = v;
  }
  std::string finish() {
    rec_.finished_unix = long(std::time(nullptr));
    std::string path = out_dir_ + "/" + name_ + "_run.json";
    write_run_record(path, rec_);
    return path;
  }

 private:
  std::string out_dir_;
  std::string name_;
  RunRecord rec_;
};

}  // namespace

void parallel_for(long count, int workers,
                  const std::function<void(long)>& body) {
  if (workers <= 1 || count <= 1) {
    for (long i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr first_error = nullptr;
  std::mutex err_mu;
  auto lane = [&]() {
    while (true) {
      long i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(lane);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// harmonic

void write_field_csv(const std::string& path, const HarmonicField& f) {
  CsvWriter csv(path, {"edge_from_x1", "edge_from_x2", "edge_to_x1",
                       "edge_to_x2", "N", "value", "err_est", "method"});
  std::string method =
      f.method == HarmonicMethod::ExactSolve ? "exact-solve" : "monte-carlo";
  for (const auto& [e, v] : f.values) {
    csv.row({std::to_string(e.from.x1), std::to_string(e.from.x2),
             std::to_string(e.to.x1), std::to_string(e.to.x2),
             std::to_string(f.N), fmt_g(v),
             fmt_g(f.truncation_error_estimate), method});
  }
  csv.close();
}

HarmonicCmdReport run_harmonic_cmd(const HarmonicCmd& cfg) {
  RecordBuilder rb(cfg.out_dir, "harmonic");
  HarmonicCmdReport rep;
  AggregateSet b;
  if (!cfg.aggregate_path.empty())
    b = to_aggregate_set(load_aggregate_file(cfg.aggregate_path));
  HarmonicPolicy policy;
  int N = cfg.N > 0 ? cfg.N : policy.schedule_start(b.max_height());
  if (N <= b.max_height()) fail_pre("harmonic: N must exceed max height of B");

  rb.echo("aggregate", cfg.aggregate_path.empty() ? "<floor>"
                                                  : cfg.aggregate_path);
  rb.echo("N", std::to_string(N));
  rb.echo("tol", fmt_g(cfg.tol));
  rb.echo("seed", std::to_string(cfg.master_seed));

  // Probe: the topmost site of B, else the floor origin.
  Site probe = b.sites().empty() ? Site{0, 0} : b.sites().back();

  HarmonicField field = solve_hitting_field(b, N, policy, cfg.tol, true);
  if (cfg.method_exact) {
    rep.field_csv = cfg.out_dir + "/harmonic_field.csv";
    write_field_csv(rep.field_csv, field);
    rb.output(rep.field_csv);
    rep.outputs.push_back(rep.field_csv);
  }
  rep.exact_point = field.point(probe);

  if (cfg.method_mc) {
    Rng rng(mix64(cfg.master_seed, 0x4a11edULL));
    McEstimate mc =
        mc_hm_estimate(b, probe, N, cfg.mc_replicas, rng, policy);
    rep.mc_mean = mc.mean;
    rep.mc_se = mc.std_error;
    rep.z_score =
        mc.std_error > 0 ? (mc.mean - rep.exact_point) / mc.std_error : 0.0;
    std::string path = cfg.out_dir + "/harmonic_mc.csv";
    CsvWriter csv(path, {"probe_x1", "probe_x2", "N", "exact", "mc_mean",
                         "mc_se", "z", "replicas", "discard_rate"});
    csv.row({std::to_string(probe.x1), std::to_string(probe.x2),
             std::to_string(N), fmt_g(rep.exact_point), fmt_g(mc.mean),
             fmt_g(mc.std_error), fmt_g(rep.z_score),
             std::to_string(mc.replicas_used), fmt_g(mc.discard_rate)});
    csv.close();
    rb.output(path);
    rep.outputs.push_back(path);
  }

  if (!cfg.n_sequence.empty()) {
    rep.convergence_csv = cfg.out_dir + "/harmonic_convergence.csv";
    CsvWriter csv(rep.convergence_csv,
                  {"N", "point_value", "increment"});
    double prev = 0.0;
    bool have = false;
    for (long n : cfg.n_sequence) {
      if (n <= b.max_height()) fail_pre("harmonic: N-sequence below B");
      HarmonicField fn = solve_hitting_field(b, int(n), policy, cfg.tol, false);
      double v = fn.point(probe);
      csv.row({std::to_string(n), fmt_g(v), have ? fmt_g(v - prev) : "nan"});
      prev = v;
      have = true;
    }
    csv.close();
    rb.output(rep.convergence_csv);
    rep.outputs.push_back(rep.convergence_csv);
  }

  if (cfg.bound_audit) {
    HeightBoundReport hb = verify_height_bound({b}, 0.10, policy);
    rep.c_audit = hb.c_audit;
    std::string path = cfg.out_dir + "/harmonic_bound.csv";
    CsvWriter csv(path, {"height", "max_ratio"});
    for (const auto& [h, r] : hb.per_height_max)
      csv.row({std::to_string(h), fmt_g(r)});
    csv.close();
    rb.output(path);
    rep.outputs.push_back(path);
    rb.summary("c_audit", fmt_g(hb.c_audit));
  }

  rb.summary("exact_point", fmt_g(rep.exact_point));
  rep.outputs.push_back(rb.finish());
  return rep;
}

// ---------------------------------------------------------------------------
// interface-tail

InterfaceTailReport run_interface_tail(const InterfaceTailCmd& cfg) {
  RecordBuilder rb(cfg.out_dir, "interface_tail");
  rb.echo("replicas", std::to_string(cfg.replicas));
  rb.echo("envelope_samples", std::to_string(cfg.envelope_samples));
  rb.echo("seed", std::to_string(cfg.master_seed));
  InterfaceTailReport rep;

  // Tail of ||I^0_1||_2 from the origin seed; c_dom = 1 keeps the stream at
  // the process rates sqrt(x2) v 1.
  BoxRegion box{-64, 64, 0, 64};
  std::vector<double> norms(size_t(cfg.replicas), 0.0);
  parallel_for(cfg.replicas, cfg.workers, [&](long r) {
    EventStream stream(replica_seed(cfg.master_seed, uint64_t(r)), 1.0, 1.0);
    InterfaceState st = simulate_interface({{0, 0}}, 1.0, box, stream);
    norms[size_t(r)] = st.max_l2();
  });

  // Envelope factors P(sum_{i=1..k} T_i < 1), T_i ~ Exp(4 sqrt(i+1)), by
  // direct Monte Carlo over the T_i.
  std::vector<long> env_hits(size_t(cfg.k_max) + 1, 0);
  {
    Rng rng(mix64(cfg.master_seed, 0xe47e107eULL));
    for (long s = 0; s < cfg.envelope_samples; ++s) {
      double sum = 0.0;
      for (int i = 1; i <= cfg.k_max; ++i) {
        sum += rng.next_exp(4.0 * std::sqrt(double(i + 1)));
        if (sum < 1.0 && i <= cfg.k_max) env_hits[size_t(i)]++;
      }
    }
  }

  std::string tail_path = cfg.out_dir + "/interface_tail.csv";
  CsvWriter csv(tail_path, {"k", "replicas", "p_ge", "p_gt", "p_se",
                            "envelope", "envelope_se", "violated"});
  for (int k = 0; k <= cfg.k_max; ++k) {
    TailRow row;
    row.k = k;
    long ge = 0, gt = 0;
    for (double v : norms) {
      if (v >= double(k)) ge++;
      if (v > double(k)) gt++;
    }
    row.p_ge = double(ge) / double(cfg.replicas);
    row.p_gt = double(gt) / double(cfg.replicas);
    row.p_se = std::sqrt(row.p_gt * (1.0 - row.p_gt) / double(cfg.replicas));
    if (k == 0) {
      row.envelope = 1.0;
      row.envelope_se = 0.0;
    } else {
      double pf = double(env_hits[size_t(k)]) / double(cfg.envelope_samples);
      double pf_se = std::sqrt(pf * (1.0 - pf) / double(cfg.envelope_samples));
      double factor = std::pow(4.0, double(k));
      row.envelope = std::min(1.0, factor * pf);
      row.envelope_se = factor * pf_se;
    }
    double slack = 3.0 * std::sqrt(row.p_se * row.p_se +
                                   row.envelope_se * row.envelope_se);
    row.violated = row.p_gt > row.envelope + slack;
    rep.rows.push_back(row);
    csv.row({std::to_string(k), std::to_string(cfg.replicas), fmt_g(row.p_ge),
             fmt_g(row.p_gt), fmt_g(row.p_se), fmt_g(row.envelope),
             fmt_g(row.envelope_se), row.violated ? "1" : "0"});
  }
  csv.close();
  rb.output(tail_path);
  rep.outputs.push_back(tail_path);

  // Box-escape frequency against the paper box for floor segments.
  std::string esc_path = cfg.out_dir + "/interface_escape.csv";
  CsvWriter esc(esc_path, {"n", "replicas", "escapes", "freq", "wilson_lo",
                           "wilson_hi"});
  for (long n : cfg.escape_ns) {
    std::vector<uint8_t> hit(size_t(cfg.escape_replicas), 0);
    BoxRegion pbox = coupling_box(int(n));
    parallel_for(cfg.escape_replicas, cfg.workers, [&](long r) {
      EventStream stream(
          mix64(cfg.master_seed, 0xe5cULL, uint64_t(n), uint64_t(r)), 1.0,
          1.0);
      InterfaceState st =
          simulate_interface(segment_seed(int(n)), 1.0, pbox, stream);
      hit[size_t(r)] = st.truncation_hit ? 1 : 0;
    });
    long k = 0;
    for (uint8_t h : hit) k += h;
    WilsonInterval w = wilson(k, cfg.escape_replicas);
    rep.escape.push_back({n, w});
    esc.row({std::to_string(n), std::to_string(cfg.escape_replicas),
             std::to_string(k), fmt_g(w.p_hat), fmt_g(w.lo), fmt_g(w.hi)});
  }
  esc.close();
  rb.output(esc_path);
  rep.outputs.push_back(esc_path);
  rep.outputs.push_back(rb.finish());
  return rep;
}

// ---------------------------------------------------------------------------
// dla

EngineConfig dla_config(int n, double c_dom, int box_height) {
  EngineConfig cfg;
  cfg.c_dom = c_dom;
  int h = box_height > 0 ? box_height : 4 * log_height(n);
  cfg.truncation = BoxRegion{-n - h, n + h, 0, h};
  return cfg;
}

DlaReport run_dla_cmd(const DlaCmd& cfg) {
  if (cfg.replicas < 1) fail_pre("dla: replicas must be >= 1");
  RecordBuilder rb(cfg.out_dir, "dla");
  rb.echo("n", std::to_string(cfg.n));
  rb.echo("t_end", fmt_g(cfg.t_end));
  rb.echo("engine", cfg.engine);
  rb.echo("replicas", std::to_string(cfg.replicas));
  rb.echo("seed", std::to_string(cfg.master_seed));
  DlaReport rep;

  bool thinned = cfg.engine == "thinned" || cfg.engine == "both";
  bool kmc = cfg.engine == "kmc" || cfg.engine == "both";
  if (!thinned && !kmc) fail_pre("dla: engine must be thinned|kmc|both");

  EngineConfig ecfg = dla_config(cfg.n, cfg.c_dom, cfg.box_height);
  ecfg.record_events = cfg.record_events;
  std::vector<Site> seed = segment_seed(cfg.n);
  SeedPrototype proto = make_seed_prototype(seed, ecfg);

  struct Row {
    std::string engine;
    long attached = 0;
    int max_height = 0;
    bool hit = false;
    long violations = 0;
    long recomputes = 0;
    std::string snapshot_body;
    std::vector<EventRow> events;
  };
  long per_engine = cfg.replicas;
  std::vector<Row> rows(size_t(per_engine) * (thinned && kmc ? 2 : 1));

  auto fill = [&](Row& row, const RunResult& res, const char* name) {
    row.engine = name;
    row.attached = long(res.aggregate.sites().size()) -
                   long(res.aggregate.seed_size());
    row.max_height = res.diagnostics.max_height;
    row.hit = res.diagnostics.truncation_hit;
    row.violations = res.diagnostics.prob_violations;
    row.recomputes = res.diagnostics.recomputes;
    row.events = res.diagnostics.rows;
    row.snapshot_body = snapshot(res.aggregate);
  };

  parallel_for(per_engine, cfg.workers, [&](long r) {
    uint64_t rs = replica_seed(cfg.master_seed, uint64_t(r));
    size_t slot = size_t(r) * (thinned && kmc ? 2 : 1);
    if (thinned) {
      EventStream stream(rs, cfg.t_end, cfg.c_dom);
      RunResult res = run_thinned(seed, cfg.t_end, ecfg, stream, {}, &proto);
      fill(rows[slot], res, "thinned");
      slot++;
    }
    if (kmc) {
      Rng rng(mix64(rs, 0x63ULL));
      RunResult res = run_kmc(seed, cfg.t_end, ecfg, rng, {}, &proto);
      fill(rows[slot], res, "kmc");
    }
  });

  std::string sum_path = cfg.out_dir + "/dla_replicas.csv";
  CsvWriter csv(sum_path, {"replica", "engine", "attached", "max_height",
                           "truncation_hit", "prob_violations", "recomputes"});
  for (size_t i = 0; i < rows.size(); ++i) {
    const Row& row = rows[i];
    long rep_index = long(i) / (thinned && kmc ? 2 : 1);
    csv.row({std::to_string(rep_index), row.engine,
             std::to_string(row.attached), std::to_string(row.max_height),
             row.hit ? "1" : "0", std::to_string(row.violations),
             std::to_string(row.recomputes)});
    rep.attached_per_replica.push_back(row.attached);
    rep.max_height_per_replica.push_back(row.max_height);
    if (row.hit) rep.truncation_hits++;
    rep.prob_violations += row.violations;
  }
  csv.close();
  rb.output(sum_path);
  rep.outputs.push_back(sum_path);

  // First replica snapshot in the shared aggregate format.
  std::string snap_path = cfg.out_dir + "/dla_aggregate.json";
  write_aggregate_file(snap_path, rows.front().snapshot_body);
  rb.output(snap_path);
  rep.outputs.push_back(snap_path);

  if (cfg.record_events) {
    std::string ev_path = cfg.out_dir + "/dla_events.csv";
    CsvWriter ev(ev_path, {"replica", "engine", "event_time", "from_x1",
                           "from_x2", "to_x1", "to_x2", "accepted", "prob",
                           "recompute_ms"});
    for (size_t i = 0; i < rows.size(); ++i) {
      long rep_index = long(i) / (thinned && kmc ? 2 : 1);
      for (const EventRow& e : rows[i].events)
        ev.row({std::to_string(rep_index), rows[i].engine, fmt_g(e.event_time),
                std::to_string(e.edge.from.x1), std::to_string(e.edge.from.x2),
                std::to_string(e.edge.to.x1), std::to_string(e.edge.to.x2),
                e.accepted ? "1" : "0", fmt_g(e.prob), fmt_g(e.recompute_ms)});
    }
    ev.close();
    rb.output(ev_path);
    rep.outputs.push_back(ev_path);
  }

  rep.outputs.push_back(rb.finish());
  return rep;
}

// ---------------------------------------------------------------------------
// couple

CoupleReport run_couple_cmd(const CoupleCmd& cfg) {
  RecordBuilder rb(cfg.out_dir, "couple");
  rb.echo("n", std::to_string(cfg.n));
  rb.echo("T", fmt_g(cfg.T));
  rb.echo("replicas", std::to_string(cfg.replicas));
  rb.echo("seed", std::to_string(cfg.master_seed));
  CoupleReport rep;

  EngineConfig ecfg = coupling_config(cfg.n, cfg.c_dom);
  CoupledPrototypes protos = make_coupled_prototypes(cfg.n, ecfg);
  std::vector<BoxRegion> windows;
  for (const auto& w : cfg.windows) windows.push_back(w.box);

  rep.rows.assign(size_t(cfg.replicas), {});
  parallel_for(cfg.replicas, cfg.workers, [&](long r) {
    uint64_t rs = replica_seed(cfg.master_seed, uint64_t(r));
    EventStream stream(rs, cfg.T, cfg.c_dom);
    auto [st, rec] = run_coupled(cfg.n, cfg.T, windows, ecfg, stream, &protos);
    CoupleReplicaRow& row = rep.rows[size_t(r)];
    row.replica_seed = rs;
    row.gamma_hit = st.gamma_hit;
    row.gamma_time = st.gamma_time.value_or(-1.0);
    row.count_at_1 = rec.count_at_1;
    row.disagreed = rec.disagreed;
  });

  std::string path = cfg.out_dir + "/couple_replicas.csv";
  CsvWriter csv(path, {"replica_seed", "n", "gamma_hit", "gamma_time",
                       "count_at_1", "window_id", "disagreed"});
  std::vector<long> disagree_counts(cfg.windows.size(), 0);
  for (const auto& row : rep.rows) {
    auto base = std::vector<std::string>{
        std::to_string(row.replica_seed), std::to_string(cfg.n),
        row.gamma_hit ? "1" : "0", fmt_g(row.gamma_time),
        std::to_string(row.count_at_1)};
    if (cfg.windows.empty()) {
      auto cells = base;
      cells.push_back("-");
      cells.push_back("0");
      csv.row(cells);
    }
    for (size_t w = 0; w < cfg.windows.size(); ++w) {
      auto cells = base;
      cells.push_back(cfg.windows[w].id);
      cells.push_back(row.disagreed[w] ? "1" : "0");
      if (row.disagreed[w]) disagree_counts[w]++;
      csv.row(cells);
    }
  }
  csv.close();
  for (size_t w = 0; w < cfg.windows.size(); ++w)
    rep.disagreement.push_back(wilson(disagree_counts[w], cfg.replicas));
  rb.output(path);
  rep.outputs.push_back(path);
  rep.outputs.push_back(rb.finish());
  return rep;
}

// ---------------------------------------------------------------------------
// locality

LocalityReport run_locality_cmd(const LocalityCmd& cfg) {
  for (size_t i = 1; i < cfg.ns.size(); ++i)
    if (cfg.ns[i] <= cfg.ns[i - 1])
      fail_pre("locality: n list must be ascending");
  if (cfg.replicas < 500) fail_pre("locality: replicas must be >= 500");

  RecordBuilder rb(cfg.out_dir, "locality");
  rb.echo("ns", [&] {
    std::string s;
    for (long n : cfg.ns) s += (s.empty() ? "" : ",") + std::to_string(n);
    return s;
  }());
  rb.echo("replicas", std::to_string(cfg.replicas));
  rb.echo("window", cfg.window.str());
  rb.echo("seed", std::to_string(cfg.master_seed));

  LocalityReport rep;
  for (long n : cfg.ns) {
    EngineConfig ecfg = coupling_config(int(n), cfg.c_dom);
    CoupledPrototypes protos = make_coupled_prototypes(int(n), ecfg);
    std::vector<uint8_t> dis(size_t(cfg.replicas), 0);
    parallel_for(cfg.replicas, cfg.workers, [&](long r) {
      EventStream stream(replica_seed(cfg.master_seed, uint64_t(r)), cfg.T,
                         cfg.c_dom);
      auto [st, rec] =
          run_coupled(int(n), cfg.T, {cfg.window}, ecfg, stream, &protos);
      dis[size_t(r)] = rec.disagreed[0] ? 1 : 0;
    });
    long k = 0;
    for (uint8_t d : dis) k += d;
    LocalityRow row;
    row.n = n;
    row.p = wilson(k, cfg.replicas);
    rep.rows.push_back(row);
  }

  // Matched-seed field stabilization:H on the window for A^n vs A^{2n} at
  // fixed times, same stream, common solver policy.
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    long n = rep.rows[i].n;
    long n2 = 2 * n;
    EngineConfig cn = coupling_config(int(n), cfg.c_dom);
    EngineConfig cn2 = coupling_config(int(n2), cfg.c_dom);
    SeedPrototype pn = make_seed_prototype(segment_seed(int(n)), cn);
    SeedPrototype pn2 = make_seed_prototype(segment_seed(int(n2)), cn2);
    std::vector<double> diffs(size_t(cfg.stabilization_pairs), 0.0);
    parallel_for(cfg.stabilization_pairs, cfg.workers, [&](long j) {
      uint64_t seed = mix64(cfg.master_seed, 0x57abULL, uint64_t(n),
                            uint64_t(j));
      EventStream stream(seed, cfg.T, cfg.c_dom);
      std::vector<double> times{cfg.T / 2.0, cfg.T};
      RunResult a = run_thinned(segment_seed(int(n)), cfg.T, cn, stream,
                                times, &pn);
      RunResult b = run_thinned(segment_seed(int(n2)), cfg.T, cn2, stream,
                                times, &pn2);
      // Common solve policy: the larger run's N and a domain covering both.
      int N = cn2.run_N();
      HarmonicPolicy pol = cn2.harmonic_policy;
      BoxRegion dom = pol.domain_for_extent(cn2.truncation.x_min,
                                            cn2.truncation.x_max, N);
      double maxdiff = 0.0;
      for (size_t snap = 0; snap < times.size(); ++snap) {
        auto blocked = [](const Aggregate& a) {
          std::vector<Site> out;
          for (const Site& s : a.sites())
            if (s.x2 > 0) out.push_back(s);
          return out;
        };
        StripSolver fa(dom, blocked(a.snapshots[snap]), 1e-10);
        fa.solve();
        StripSolver fb(dom, blocked(b.snapshots[snap]), 1e-10);
        fb.solve();
        for (int x1 = cfg.window.x_min; x1 <= cfg.window.x_max; ++x1) {
          for (int x2 = cfg.window.y_min; x2 <= cfg.window.y_max; ++x2) {
            Site s{x1, x2};
            auto point = [&s](const StripSolver& f, const Aggregate& agg) {
              if (s.x2 > 0 && !agg.contains(s)) return 0.0;
              double sum = 0.0;
              for (Dir d : {Dir::PlusX, Dir::MinusX, Dir::Up, Dir::Down}) {
                Site to = step(s, d);
                if (to.in_half_plane()) sum += f.edge_value({s, to});
              }
              return sum;
            };
            maxdiff = std::max(maxdiff,
                               std::fabs(point(fa, a.snapshots[snap]) -
                                         point(fb, b.snapshots[snap])));
          }
        }
      }
      diffs[size_t(j)] = maxdiff;
    });
    double worst = 0.0;
    for (double d : diffs) worst = std::max(worst, d);
    rep.rows[i].field_max_diff = worst;
  }

  // Trend summary.
  for (size_t i = 1; i < rep.rows.size(); ++i)
    if (rep.rows[i].p.lo > rep.rows[i - 1].p.hi) rep.nonincreasing_ci = false;
  rep.strict_last_below_first =
      rep.rows.back().p.p_hat < rep.rows.front().p.p_hat;
  {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    long m = 0;
    for (const auto& row : rep.rows) {
      if (row.p.p_hat <= 0.0) continue;
      double lx = std::log(double(row.n)), ly = std::log(row.p.p_hat);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      m++;
    }
    if (m >= 2) rep.loglog_slope = (sxy - sx * sy / m) / (sxx - sx * sx / m);
  }

  std::string path = cfg.out_dir + "/locality.csv";
  CsvWriter csv(path, {"n", "replicas", "p_hat", "wilson_lo", "wilson_hi",
                       "field_max_diff"});
  for (const auto& row : rep.rows)
    csv.row({std::to_string(row.n), std::to_string(cfg.replicas),
             fmt_g(row.p.p_hat), fmt_g(row.p.lo), fmt_g(row.p.hi),
             fmt_g(row.field_max_diff)});
  csv.close();
  rb.output(path);
  rb.summary("loglog_slope", fmt_g(rep.loglog_slope));
  rep.outputs.push_back(path);
  rep.outputs.push_back(rb.finish());
  return rep;
}

// ---------------------------------------------------------------------------
// stationarity

StationarityReport run_stationarity_cmd(const StationarityCmd& cfg) {
  if (cfg.shift > cfg.n / 4)
    fail_pre("stationarity: shift too large for n (must be <= n/4)");
  RecordBuilder rb(cfg.out_dir, "stationarity");
  rb.echo("n", std::to_string(cfg.n));
  rb.echo("replicas", std::to_string(cfg.replicas));
  rb.echo("shift", std::to_string(cfg.shift));
  rb.echo("seed", std::to_string(cfg.master_seed));

  EngineConfig ecfg = coupling_config(cfg.n, cfg.c_dom);
  std::vector<Site> seed = segment_seed(cfg.n);
  SeedPrototype proto = make_seed_prototype(seed, ecfg);

  size_t np = cfg.probes.size();
  std::vector<uint8_t> occ(size_t(cfg.replicas) * np * 3, 0);
  parallel_for(cfg.replicas, cfg.workers, [&](long r) {
    EventStream stream(replica_seed(cfg.master_seed, uint64_t(r)), cfg.T,
                       cfg.c_dom);
    RunResult res = run_thinned(seed, cfg.T, ecfg, stream, {}, &proto);
    for (size_t p = 0; p < np; ++p) {
      Site s = cfg.probes[p];
      Site sh{s.x1 + cfg.shift, s.x2};
      Site mi{-s.x1, s.x2};
      size_t base = (size_t(r) * np + p) * 3;
      occ[base + 0] = res.aggregate.contains(s) ? 1 : 0;
      occ[base + 1] = res.aggregate.contains(sh) ? 1 : 0;
      occ[base + 2] = res.aggregate.contains(mi) ? 1 : 0;
    }
  });

  StationarityReport rep;
  rep.replicas = cfg.replicas;
  std::string path = cfg.out_dir + "/stationarity.csv";
  CsvWriter csv(path, {"site_x1", "site_x2", "shift", "p_base", "p_shifted",
                       "p_mirror", "z_shift", "z_mirror", "replicas"});
  for (size_t p = 0; p < np; ++p) {
    StationarityRow row;
    row.site = cfg.probes[p];
    row.shifted = {row.site.x1 + cfg.shift, row.site.x2};
    for (long r = 0; r < cfg.replicas; ++r) {
      size_t base = (size_t(r) * np + p) * 3;
      row.occ_base += occ[base + 0];
      row.occ_shifted += occ[base + 1];
      row.occ_mirror += occ[base + 2];
    }
    row.z_shift = two_proportion_z(row.occ_base, cfg.replicas,
                                   row.occ_shifted, cfg.replicas);
    row.z_mirror = two_proportion_z(row.occ_base, cfg.replicas,
                                    row.occ_mirror, cfg.replicas);
    rep.max_abs_z_shift =
        std::max(rep.max_abs_z_shift, std::fabs(row.z_shift));
    rep.max_abs_z_mirror =
        std::max(rep.max_abs_z_mirror, std::fabs(row.z_mirror));
    csv.row({std::to_string(row.site.x1), std::to_string(row.site.x2),
             std::to_string(cfg.shift),
             fmt_g(double(row.occ_base) / double(cfg.replicas)),
             fmt_g(double(row.occ_shifted) / double(cfg.replicas)),
             fmt_g(double(row.occ_mirror) / double(cfg.replicas)),
             fmt_g(row.z_shift), fmt_g(row.z_mirror),
             std::to_string(cfg.replicas)});
    rep.rows.push_back(row);
  }
  csv.close();
  rb.output(path);
  rb.summary("max_abs_z_shift", fmt_g(rep.max_abs_z_shift));
  rb.summary("max_abs_z_mirror", fmt_g(rep.max_abs_z_mirror));
  rep.outputs.push_back(path);
  rep.outputs.push_back(rb.finish());
  return rep;
}

// ---------------------------------------------------------------------------
// mixing

MixingReport run_mixing_cmd(const MixingCmd& cfg) {
  for (long d : cfg.separations)
    if (d < 4 || d % 2 != 0) fail_pre("mixing: separations must be even, >= 4");
  RecordBuilder rb(cfg.out_dir, "mixing");
  rb.echo("n", std::to_string(cfg.n));
  rb.echo("replicas", std::to_string(cfg.replicas));
  rb.echo("seed", std::to_string(cfg.master_seed));

  EngineConfig ecfg = coupling_config(cfg.n, cfg.c_dom);
  std::vector<Site> seed = segment_seed(cfg.n);
  SeedPrototype proto = make_seed_prototype(seed, ecfg);

  // Big-run indicators at (+-d/2, 1) for every separation, one run per
  // replica shared across the separation list.
  size_t nd = cfg.separations.size();
  std::vector<uint8_t> ind(size_t(cfg.replicas) * nd * 2, 0);
  parallel_for(cfg.replicas, cfg.workers, [&](long r) {
    EventStream stream(replica_seed(cfg.master_seed, uint64_t(r)), cfg.T,
                       cfg.c_dom);
    RunResult res = run_thinned(seed, cfg.T, ecfg, stream, {}, &proto);
    for (size_t di = 0; di < nd; ++di) {
      int half = int(cfg.separations[di]) / 2;
      size_t base = (size_t(r) * nd + di) * 2;
      ind[base + 0] = res.aggregate.contains({-half, 1}) ? 1 : 0;
      ind[base + 1] = res.aggregate.contains({half, 1}) ? 1 : 0;
    }
  });

  // Local copies on the same streams: two thinned engines seeded around the
  // window centers; the radius events and the consulted-edge disjointness
  // check live here.
  MixingReport rep;
  std::string path = cfg.out_dir + "/mixing.csv";
  CsvWriter csv(path,
                {"separation", "replicas", "corr", "corr_lo", "corr_hi",
                 "qualifying", "disjoint_ok", "radius_freq", "radius_lo",
                 "radius_hi"});
  for (size_t di = 0; di < nd; ++di) {
    long d = cfg.separations[di];
    int half = int(d) / 2;
    int radius = half - 1;  // both-events clusters stay l-inf below d/2
    int m = std::max(1, int(d) / 8);

    struct LocalOut {
      uint8_t both_within = 0;
      uint8_t disjoint = 0;
    };
    std::vector<LocalOut> louts(size_t(cfg.replicas));
    EngineConfig lcfg;
    lcfg.c_dom = cfg.c_dom;
    lcfg.truncation = BoxRegion{0, 0, 0, radius + 1};  // recentred per copy

    auto local_run = [&](int center, const EventStream& stream,
                         std::set<DirectedEdge, EdgeCanonicalLess>& consulted,
                         int& max_linf) {
      EngineConfig c = lcfg;
      c.truncation.x_min = center - (radius + 1);
      c.truncation.x_max = center + (radius + 1);
      std::vector<Site> lseed;
      for (int x = center - m; x <= center + m; ++x) lseed.push_back({x, 0});
      ThinnedEngine eng(lseed, c, stream, nullptr);
      EventFeed feed(stream);
      for (const Site& s : lseed) feed.activate_site(s, 0.0);
      while (!eng.frozen()) {
        auto ev = feed.pop(cfg.T);
        if (!ev) break;
        consulted.insert(ev->edge);
        auto out = eng.handle(*ev);
        if (out == ThinnedEngine::Outcome::Accepted)
          feed.activate_site(ev->edge.to, ev->time);
        if (eng.occupies(ev->edge.to)) feed.retire(ev->edge);
      }
      max_linf = 0;
      for (const Site& s : eng.aggregate().sites())
        max_linf = std::max(max_linf,
                            std::max(std::abs(s.x1 - center), std::abs(s.x2)));
    };

    parallel_for(cfg.replicas, cfg.workers, [&](long r) {
      EventStream stream(replica_seed(cfg.master_seed, uint64_t(r)), cfg.T,
                         cfg.c_dom);
      std::set<DirectedEdge, EdgeCanonicalLess> c1, c2;
      int r1 = 0, r2 = 0;
      local_run(-half, stream, c1, r1);
      local_run(half, stream, c2, r2);
      bool both = r1 <= radius && r2 <= radius;
      louts[size_t(r)].both_within = both ? 1 : 0;
      if (both) {
        bool disjoint = true;
        for (const DirectedEdge& e : c1)
          if (c2.count(e)) disjoint = false;
        louts[size_t(r)].disjoint = disjoint ? 1 : 0;
      }
    });

    MixingRow row;
    row.separation = d;
    std::vector<double> a(size_t(cfg.replicas)), b(size_t(cfg.replicas));
    for (long r = 0; r < cfg.replicas; ++r) {
      size_t base = (size_t(r) * nd + di) * 2;
      a[size_t(r)] = double(ind[base + 0]);
      b[size_t(r)] = double(ind[base + 1]);
    }
    row.corr = correlation_ci(a, b);
    long qual = 0, ok = 0;
    for (const LocalOut& lo : louts) {
      if (lo.both_within) {
        qual++;
        if (lo.disjoint) ok++;
      }
    }
    row.qualifying = qual;
    row.disjoint_ok = ok;
    row.radius_event_freq = wilson(qual, cfg.replicas);
    if (qual != ok) rep.all_disjoint = false;
    rep.rows.push_back(row);
    csv.row({std::to_string(d), std::to_string(cfg.replicas),
             fmt_g(row.corr.r), fmt_g(row.corr.lo), fmt_g(row.corr.hi),
             std::to_string(qual), std::to_string(ok),
             fmt_g(row.radius_event_freq.p_hat),
             fmt_g(row.radius_event_freq.lo),
             fmt_g(row.radius_event_freq.hi)});
  }
  csv.close();

  for (size_t i = 1; i < rep.rows.size(); ++i)
    if (rep.rows[i].corr.lo > rep.rows[i - 1].corr.hi)
      rep.nonincreasing_ci = false;

  rb.output(path);
  rb.summary("all_disjoint", rep.all_disjoint ? "true" : "false");
  rep.outputs.push_back(path);
  rep.outputs.push_back(rb.finish());
  return rep;
}

}  // namespace sdla
