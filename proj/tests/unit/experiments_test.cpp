#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdla/experiments.hpp"

using namespace sdla;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct TempDir {
  std::string path;
  explicit TempDir(const std::string& name) {
    path = std::string("/tmp/sdla_test_") + name;
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
};

}  // namespace

TEST_CASE("key-value config parsing with defaults and errors") {
  TempDir dir("config");
  std::string path = dir.path + "/a.cfg";
  {
    std::ofstream f(path);
    f << "# comment\n"
      << "replicas = 250\n"
      << "tol=1e-8\n"
      << "ns = 4,8,16\n";
  }
  KeyValueConfig kv = KeyValueConfig::from_file(path);
  CHECK(kv.get_long("replicas", 0) == 250);
  CHECK(kv.get_double("tol", 0.0) == doctest::Approx(1e-8));
  CHECK(kv.get_longs("ns", {}) == std::vector<long>{4, 8, 16});
  CHECK(kv.get_long("missing", 7) == 7);

  std::string bad = dir.path + "/b.cfg";
  {
    std::ofstream f(bad);
    f << "nonsense line\n";
  }
  CHECK_THROWS_AS(KeyValueConfig::from_file(bad), Error);
}

TEST_CASE("run records verify their output digests") {
  TempDir dir("record");
  std::string csv = dir.path + "/t.csv";
  {
    CsvWriter w(csv, {"a", "b"});
    w.row({"1", "2"});
    w.close();
  }
  RunRecord rec;
  rec.code_version = code_version();
  rec.config_echo["k"] = "v";
  char digest[32];
  std::snprintf(digest, sizeof(digest), "%016llx",
                (unsigned long long)file_digest(csv));
  rec.output_digests["t.csv"] = digest;
  std::string rpath = dir.path + "/run.json";
  write_run_record(rpath, rec);
  CHECK(verify_run_record(rpath));

  // Tamper with the output; verification must fail.
  {
    std::ofstream f(csv, std::ios::app);
    f << "3,4\n";
  }
  CHECK(!verify_run_record(rpath));
}

TEST_CASE("interface tail experiment produces a sane report") {
  TempDir dir("tail");
  InterfaceTailCmd cmd;
  cmd.replicas = 400;
  cmd.envelope_samples = 20000;
  cmd.k_max = 6;
  cmd.escape_ns = {8};
  cmd.escape_replicas = 60;
  cmd.master_seed = 5;
  cmd.workers = 2;
  cmd.out_dir = dir.path;
  InterfaceTailReport rep = run_interface_tail(cmd);
  REQUIRE(rep.rows.size() == 7);
  CHECK(rep.rows[0].p_ge == doctest::Approx(1.0));  // k = 0: tail is 1
  for (const auto& row : rep.rows) {
    CHECK(row.p_gt <= row.p_ge);
    CHECK(row.envelope >= 0.0);
    CHECK(row.envelope <= 1.0);
    CHECK(!row.violated);
  }
  CHECK(verify_run_record(dir.path + "/interface_tail_run.json"));
}

TEST_CASE("replica outputs are byte-identical across worker counts") {
  // The reproducibility contract: same master seed, different worker count,
  // identical CSV bytes.
  TempDir d1("repro1"), d2("repro2");
  CoupleCmd cmd;
  cmd.n = 4;
  cmd.T = 1.0;
  cmd.replicas = 24;
  cmd.windows.push_back({BoxRegion{-2, 2, 0, 2}, "K"});
  cmd.master_seed = 31337;
  cmd.workers = 1;
  cmd.out_dir = d1.path;
  run_couple_cmd(cmd);
  cmd.workers = 2;
  cmd.out_dir = d2.path;
  run_couple_cmd(cmd);
  CHECK(slurp(d1.path + "/couple_replicas.csv") ==
        slurp(d2.path + "/couple_replicas.csv"));
}

TEST_CASE("harmonic command writes field, mc and convergence tables") {
  TempDir dir("harm");
  HarmonicCmd cmd;
  cmd.method_exact = true;
  cmd.method_mc = true;
  cmd.mc_replicas = 5000;
  cmd.n_sequence = {4, 8, 16};
  cmd.out_dir = dir.path;
  HarmonicCmdReport rep = run_harmonic_cmd(cmd);
  CHECK(std::fabs(rep.z_score) < 4.0);
  std::string field = slurp(rep.field_csv);
  CHECK(field.find("edge_from_x1") == 0);
  std::string conv = slurp(rep.convergence_csv);
  // Three data rows after the header.
  CHECK(std::count(conv.begin(), conv.end(), '\n') == 4);
  CHECK(verify_run_record(dir.path + "/harmonic_run.json"));
}

TEST_CASE("stationarity command respects its shift precondition") {
  StationarityCmd cmd;
  cmd.n = 16;
  cmd.shift = 8;  // > n/4
  cmd.replicas = 10;
  cmd.out_dir = "/tmp";
  CHECK_THROWS_AS(run_stationarity_cmd(cmd), Error);
}

TEST_CASE("locality command rejects descending n lists") {
  LocalityCmd cmd;
  cmd.ns = {8, 4};
  cmd.out_dir = "/tmp";
  CHECK_THROWS_AS(run_locality_cmd(cmd), Error);
}
