// sdla: experiment runner for the stationary-DLA laboratory.
//
// Subcommands: harmonic, interface-tail, dla, couple, locality,
// stationarity, mixing.  Exit codes: 0 success, 2 precondition error,
// 3 numerical failure, 4 inconclusive trend assertion.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "sdla/experiments.hpp"
#include "sdla/version.hpp"

using namespace sdla;

namespace {

struct CommonFlags {
  uint64_t seed = 1;
  long replicas = -1;  // -1: subcommand default
  std::string out_dir = ".";
  std::string config_path;
  int workers = 1;
};

void add_common(CLI::App* cmd, CommonFlags& c) {
  cmd->add_option("--seed", c.seed, "master seed (default 1)");
  cmd->add_option("--replicas", c.replicas, "replica count");
  cmd->add_option("--out-dir", c.out_dir, "output directory (default .)");
  cmd->add_option("--config", c.config_path, "flat key=value config file");
  cmd->add_option("--workers", c.workers,
                  "worker lanes; never changes output bytes (default 1)");
}

KeyValueConfig load_config(const CommonFlags& c) {
  KeyValueConfig kv;
  if (!c.config_path.empty()) kv = KeyValueConfig::from_file(c.config_path);
  return kv;
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail_pre("cannot create out-dir: " + dir);
}

int exit_inconclusive(const std::string& what) {
  std::cout << "INCONCLUSIVE: " << what << "\n";
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stationary-DLA laboratory"};
  app.set_version_flag("--version", code_version());
  app.require_subcommand(1);

  // harmonic ---------------------------------------------------------------
  auto* harmonic = app.add_subcommand(
      "harmonic", "exact/MC stationary harmonic measure on an aggregate");
  CommonFlags hc;
  add_common(harmonic, hc);
  std::string h_aggregate;
  std::string h_method = "exact";
  std::string h_nseq;
  int h_N = 0;
  bool h_bound = false;
  harmonic->add_option("--aggregate", h_aggregate,
                       "aggregate file (default: floor only)");
  harmonic->add_option("--method", h_method, "exact | mc | both");
  harmonic->add_option("--N", h_N, "source line height (default: policy)");
  harmonic->add_option("--N-sequence", h_nseq,
                       "comma list of N values for a convergence table");
  harmonic->add_flag("--bound-audit", h_bound,
                     "audit H_B(x)/sqrt(x2) over the aggregate");

  // interface-tail ----------------------------------------------------------
  auto* tail = app.add_subcommand("interface-tail",
                                  "interface radius tail and escape rates");
  CommonFlags tc;
  add_common(tail, tc);

  // dla ----------------------------------------------------------------------
  auto* dla = app.add_subcommand("dla", "DLA engine runs from a floor segment");
  CommonFlags dc;
  add_common(dla, dc);
  int d_n = 8;
  double d_t = 1.0;
  std::string d_engine = "thinned";
  bool d_events = false;
  dla->add_option("--n", d_n, "seed half-length [-n,n] (default 8)");
  dla->add_option("--t-end", d_t, "horizon (default 1)");
  dla->add_option("--engine", d_engine, "thinned | kmc | both");
  dla->add_flag("--record-events", d_events, "emit the event-log CSV");

  // couple --------------------------------------------------------------------
  auto* couple = app.add_subcommand("couple", "coupled pair (A^n, A^{n+1})");
  CommonFlags cc;
  add_common(couple, cc);
  int c_n = 8;
  double c_T = 1.0;
  couple->add_option("--n", c_n, "segment half-length (default 8)");
  couple->add_option("--T", c_T, "horizon (default 1)");

  // locality --------------------------------------------------------------------
  auto* locality =
      app.add_subcommand("locality", "window disagreement decay over n");
  CommonFlags lc;
  add_common(locality, lc);
  std::string l_ns = "4,8,16,32";
  locality->add_option("--ns", l_ns, "ascending n list (default 4,8,16,32)");

  // stationarity -------------------------------------------------------------
  auto* stationarity = app.add_subcommand(
      "stationarity", "occupation probabilities under shift and mirror");
  CommonFlags sc;
  add_common(stationarity, sc);
  int s_n = 64;
  int s_shift = 5;
  stationarity->add_option("--n", s_n, "segment half-length (default 64)");
  stationarity->add_option("--shift", s_shift, "horizontal shift (default 5)");

  // mixing -----------------------------------------------------------------
  auto* mixing =
      app.add_subcommand("mixing", "window correlations against separation");
  CommonFlags mc;
  add_common(mixing, mc);
  int m_n = 128;
  std::string m_seps = "8,16,32";
  mixing->add_option("--n", m_n, "segment half-length (default 128)");
  mixing->add_option("--separations", m_seps,
                     "even separations (default 8,16,32)");

  CLI11_PARSE(app, argc, argv);

  auto parse_longs = [](const std::string& s) {
    std::vector<long> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stol(tok));
    return out;
  };

  try {
    if (harmonic->parsed()) {
      ensure_out_dir(hc.out_dir);
      KeyValueConfig kv = load_config(hc);
      HarmonicCmd cmd;
      cmd.aggregate_path = h_aggregate;
      cmd.N = h_N > 0 ? h_N : int(kv.get_long("N", 0));
      cmd.method_exact = h_method == "exact" || h_method == "both";
      cmd.method_mc = h_method == "mc" || h_method == "both";
      cmd.mc_replicas = hc.replicas > 0 ? hc.replicas
                                        : kv.get_long("mc_replicas", 100000);
      cmd.tol = kv.get_double("tol", 1e-10);
      if (!h_nseq.empty()) cmd.n_sequence = parse_longs(h_nseq);
      cmd.bound_audit = h_bound;
      cmd.master_seed = hc.seed;
      cmd.out_dir = hc.out_dir;
      HarmonicCmdReport rep = run_harmonic_cmd(cmd);
      std::cout << "exact_point=" << fmt_g(rep.exact_point) << "\n";
      if (cmd.method_mc)
        std::cout << "mc=" << fmt_g(rep.mc_mean) << " se=" << fmt_g(rep.mc_se)
                  << " z=" << fmt_g(rep.z_score) << "\n";
      for (const auto& o : rep.outputs) std::cout << "wrote " << o << "\n";
      return 0;
    }
    if (tail->parsed()) {
      ensure_out_dir(tc.out_dir);
      KeyValueConfig kv = load_config(tc);
      InterfaceTailCmd cmd;
      cmd.replicas = tc.replicas > 0 ? tc.replicas
                                     : kv.get_long("replicas", 10000);
      cmd.envelope_samples = kv.get_long("envelope_samples", 1000000);
      cmd.k_max = int(kv.get_long("k_max", 8));
      cmd.escape_ns = kv.get_longs("escape_ns", {8, 16, 32});
      cmd.escape_replicas = kv.get_long("escape_replicas", 500);
      cmd.master_seed = tc.seed;
      cmd.workers = tc.workers;
      cmd.out_dir = tc.out_dir;
      InterfaceTailReport rep = run_interface_tail(cmd);
      bool any_violation = false;
      for (const auto& row : rep.rows) any_violation |= row.violated;
      for (const auto& o : rep.outputs) std::cout << "wrote " << o << "\n";
      if (any_violation) return exit_inconclusive("tail envelope violated");
      return 0;
    }
    if (dla->parsed()) {
      ensure_out_dir(dc.out_dir);
      KeyValueConfig kv = load_config(dc);
      DlaCmd cmd;
      cmd.n = d_n;
      cmd.t_end = d_t;
      cmd.engine = d_engine;
      cmd.replicas = dc.replicas > 0 ? dc.replicas : kv.get_long("replicas", 1);
      cmd.c_dom = kv.get_double("c_dom", 2.0);
      cmd.box_height = int(kv.get_long("box_height", 0));
      cmd.master_seed = dc.seed;
      cmd.workers = dc.workers;
      cmd.record_events = d_events;
      cmd.out_dir = dc.out_dir;
      DlaReport rep = run_dla_cmd(cmd);
      std::cout << "replicas=" << cmd.replicas
                << " truncation_hits=" << rep.truncation_hits
                << " prob_violations=" << rep.prob_violations << "\n";
      for (const auto& o : rep.outputs) std::cout << "wrote " << o << "\n";
      return 0;
    }
    if (couple->parsed()) {
      ensure_out_dir(cc.out_dir);
      KeyValueConfig kv = load_config(cc);
      CoupleCmd cmd;
      cmd.n = c_n;
      cmd.T = c_T;
      cmd.replicas = cc.replicas > 0 ? cc.replicas : kv.get_long("replicas", 100);
      cmd.c_dom = kv.get_double("c_dom", 2.0);
      cmd.windows.push_back(
          {BoxRegion{int(kv.get_long("window_x_min", -2)),
                     int(kv.get_long("window_x_max", 2)), 0,
                     int(kv.get_long("window_y_max", 2))},
           "K"});
      cmd.master_seed = cc.seed;
      cmd.workers = cc.workers;
      cmd.out_dir = cc.out_dir;
      CoupleReport rep = run_couple_cmd(cmd);
      std::cout << "disagreement p_hat=" << fmt_g(rep.disagreement[0].p_hat)
                << " [" << fmt_g(rep.disagreement[0].lo) << ", "
                << fmt_g(rep.disagreement[0].hi) << "]\n";
      for (const auto& o : rep.outputs) std::cout << "wrote " << o << "\n";
      return 0;
    }
    if (locality->parsed()) {
      ensure_out_dir(lc.out_dir);
      KeyValueConfig kv = load_config(lc);
      LocalityCmd cmd;
      cmd.ns = parse_longs(l_ns);
      cmd.replicas = lc.replicas > 0 ? lc.replicas
                                     : kv.get_long("replicas", 1000);
      cmd.window = BoxRegion{int(kv.get_long("window_x_min", -2)),
                             int(kv.get_long("window_x_max", 2)), 0,
                             int(kv.get_long("window_y_max", 2))};
      cmd.c_dom = kv.get_double("c_dom", 2.0);
      cmd.stabilization_pairs = kv.get_long("stabilization_pairs", 16);
      cmd.master_seed = lc.seed;
      cmd.workers = lc.workers;
      cmd.out_dir = lc.out_dir;
      LocalityReport rep = run_locality_cmd(cmd);
      for (const auto& row : rep.rows)
        std::cout << "n=" << row.n << " p_hat=" << fmt_g(row.p.p_hat) << " ["
                  << fmt_g(row.p.lo) << ", " << fmt_g(row.p.hi)
                  << "] field_max_diff=" << fmt_g(row.field_max_diff) << "\n";
      std::cout << "loglog_slope=" << fmt_g(rep.loglog_slope) << "\n";
      for (const auto& o : rep.outputs) std::cout << "wrote " << o << "\n";
      if (!rep.nonincreasing_ci)
        return exit_inconclusive("disagreement trend not non-increasing");
      return 0;
    }
    if (stationarity->parsed()) {
      ensure_out_dir(sc.out_dir);
      KeyValueConfig kv = load_config(sc);
      StationarityCmd cmd;
      cmd.n = s_n;
      cmd.shift = s_shift;
      cmd.replicas = sc.replicas > 0 ? sc.replicas
                                     : kv.get_long("replicas", 1000);
      cmd.c_dom = kv.get_double("c_dom", 2.0);
      cmd.master_seed = sc.seed;
      cmd.workers = sc.workers;
      cmd.out_dir = sc.out_dir;
      StationarityReport rep = run_stationarity_cmd(cmd);
      std::cout << "max|z| shift=" << fmt_g(rep.max_abs_z_shift)
                << " mirror=" << fmt_g(rep.max_abs_z_mirror) << "\n";
      for (const auto& o : rep.outputs) std::cout << "wrote " << o << "\n";
      if (rep.max_abs_z_shift > 3.0 || rep.max_abs_z_mirror > 3.0)
        return exit_inconclusive("stationarity z-score above 3");
      return 0;
    }
    if (mixing->parsed()) {
      ensure_out_dir(mc.out_dir);
      KeyValueConfig kv = load_config(mc);
      MixingCmd cmd;
      cmd.n = m_n;
      cmd.separations = parse_longs(m_seps);
      cmd.replicas = mc.replicas > 0 ? mc.replicas
                                     : kv.get_long("replicas", 1000);
      cmd.c_dom = kv.get_double("c_dom", 2.0);
      cmd.master_seed = mc.seed;
      cmd.workers = mc.workers;
      cmd.out_dir = mc.out_dir;
      MixingReport rep = run_mixing_cmd(cmd);
      for (const auto& row : rep.rows)
        std::cout << "d=" << row.separation << " corr=" << fmt_g(row.corr.r)
                  << " [" << fmt_g(row.corr.lo) << ", " << fmt_g(row.corr.hi)
                  << "] qualifying=" << row.qualifying << "/"
                  << cmd.replicas << " disjoint_ok=" << row.disjoint_ok
                  << "\n";
      for (const auto& o : rep.outputs) std::cout << "wrote " << o << "\n";
      if (!rep.all_disjoint)
        return exit_inconclusive("consulted-edge disjointness failed");
      if (!rep.nonincreasing_ci)
        return exit_inconclusive("correlation trend not non-increasing");
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
