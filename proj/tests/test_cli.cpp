#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fpsearch/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using fpsearch::cli::run_cli;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fpsearch_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// Header must match exactly; every other cell must parse as a number.
void check_schema(const std::string& text, const std::string& header) {
  const auto rows = read_csv(text);
  REQUIRE_FALSE(rows.empty());
  std::stringstream hs(header);
  std::vector<std::string> cols;
  std::string c;
  while (std::getline(hs, c, ',')) cols.push_back(c);
  CHECK(rows.front() == cols);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].size() == cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (cols[j] == "case") continue;
      char* end = nullptr;
      std::strtod(rows[i][j].c_str(), &end);
      CHECK(*end == '\0');
    }
  }
}

}  // namespace

TEST_CASE("table1") {
  const auto dir = scratch("table1");
  const auto r = cli({"table1", "--csv", (dir / "t.csv").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("2.4100") != std::string::npos);
  const auto text = slurp(dir / "t.csv");
  check_schema(text, "case,p,g_target,ratio_closed,ratio_paper");
  CHECK(read_csv(text).size() == 10);
  const auto m = json::parse(slurp(dir / "t.csv.manifest.json"));
  CHECK(m["command"] == "table1");
  CHECK(m["tool_version"] == fpsearch::cli::kToolVersion);
  CHECK(cli({"table1"}).code == 0);
}

TEST_CASE("analytic") {
  auto r = cli({"analytic", "--p", "0.25", "--g", "1.0"});
  REQUIRE(r.code == 0);
  auto j = json::parse(r.out);
  CHECK(j["ratio"].get<double>() == doctest::Approx(2.410).epsilon(1e-4));
  r = cli({"analytic", "--p", "0.25", "--ratio", "1.0"});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["g"].get<double>() == doctest::Approx(0.75));
  r = cli({"analytic", "--p", "0.5", "--g", "0.5"});
  CHECK(json::parse(r.out)["ratio"].get<double>() == 1.0);

  CHECK(cli({"analytic", "--p", "0.25", "--ratio", "9"}).code == 2);
  CHECK(cli({"analytic", "--p", "0.25"}).code == 2);
  CHECK(cli({"analytic", "--p", "0.25", "--g", "1", "--ratio", "1"}).code == 2);
  CHECK(cli({"analytic", "--p", "0.25", "--g", "0.1"}).code == 2);
  CHECK(cli({"analytic", "--p", "0", "--g", "0.1"}).code == 2);
}

TEST_CASE("run writes results and manifest deterministically") {
  const auto a = scratch("run_a");
  const auto b = scratch("run_b");
  const std::vector<std::string> base{"run", "--p", "0.25", "--trials", "1000", "--seed", "7"};
  auto args = base;
  args.insert(args.end(), {"--out", a.string(), "--workers", "1"});
  const auto r1 = cli(args);
  REQUIRE(r1.code == 0);
  CHECK(r1.out.rfind("run proposed", 0) == 0);
  args = base;
  args.insert(args.end(), {"--out", b.string(), "--workers", "4"});
  REQUIRE(cli(args).code == 0);
  CHECK(slurp(a / "results.json") == slurp(b / "results.json"));

  const auto res = json::parse(slurp(a / "results.json"));
  CHECK(res["schema_version"] == fpsearch::cli::kSchemaVersion);
  CHECK(res["stats"]["trials"] == 1000);
  CHECK(res["config"]["burn_in"] == 25);
  CHECK(res["config"]["mode"] == "ideal");
  const auto man = json::parse(slurp(a / "manifest.json"));
  CHECK(man["master_seed"] == 7);

  const auto c = scratch("run_c");
  REQUIRE(cli({"replay", (a / "manifest.json").string(), "--out", c.string()}).code == 0);
  CHECK(slurp(a / "results.json") == slurp(c / "results.json"));
}

TEST_CASE("run in full and ideal modes stops at the same iterations") {
  const auto f = scratch("run_full");
  const auto i = scratch("run_ideal");
  REQUIRE(cli({"run", "--n", "8", "--m", "1", "--mode", "full", "--seed", "5", "--trials", "50",
               "--record-trials", "--out", f.string()})
              .code == 0);
  REQUIRE(cli({"run", "--p", "0.00390625", "--mode", "ideal", "--seed", "5", "--trials", "50",
               "--record-trials", "--out", i.string()})
              .code == 0);
  const auto a = json::parse(slurp(f / "results.json"))["trial_records"];
  const auto b = json::parse(slurp(i / "results.json"))["trial_records"];
  REQUIRE(a.size() == 50);
  for (std::size_t t = 0; t < a.size(); ++t) {
    CHECK(a[t]["stop_horizons"] == b[t]["stop_horizons"]);
    CHECK(a[t]["found"] == b[t]["found"]);
  }
}

TEST_CASE("run edge cases and exit codes") {
  const auto d = scratch("run_edge");
  auto r = cli({"run", "--p", "1.0", "--trials", "20", "--out", d.string()});
  REQUIRE(r.code == 0);
  CHECK(json::parse(slurp(d / "results.json"))["stats"]["success_rate"] == 1.0);

  CHECK(cli({"run", "--p", "0.1", "--n", "4", "--m", "1"}).code == 2);
  CHECK(cli({"run", "--p", "0.1", "--mode", "full"}).code == 2);
  CHECK(cli({"run", "--p", "0.1", "--mode", "quantum"}).code == 2);
  CHECK(cli({"run", "--p", "0.1", "--eta", "0.5"}).code == 2);
  CHECK(cli({"run", "--n", "30", "--m", "1", "--mode", "full"}).code == 2);
  CHECK(cli({"run", "--n", "4"}).code == 2);
  CHECK(cli({"run", "--n", "4", "--targets", "1,x"}).code == 2);
  CHECK(cli({"run", "--p", "0.1", "--trials", "0"}).code == 2);
  CHECK(cli({"run", "--p", "0.1", "--algorithm", "magic"}).code == 2);
  CHECK(cli({"run", "--p", "0.1", "--no-such-flag"}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({}).code == 2);
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"--version"}).code == 0);

  r = cli({"run", "--p", "0.000001", "--trials", "5", "--max-restarts", "0", "--max-iterations", "1",
           "--set-val", "1e9", "--out", d.string()});
  CHECK(r.code == 3);
}

TEST_CASE("canonical run") {
  const auto d = scratch("run_canon");
  REQUIRE(cli({"run", "--p", "0.25", "--algorithm", "canonical", "--trials", "100", "--out",
               d.string()})
              .code == 0);
  const auto j = json::parse(slurp(d / "results.json"));
  CHECK(j["algorithm"] == "canonical");
  CHECK(j["stats"]["success_rate"] == 1.0);
}

TEST_CASE("sweep") {
  const auto d = scratch("sweep");
  const auto csv = (d / "s.csv").string();
  REQUIRE(cli({"sweep", "--trials", "100", "--seed", "2", "--csv", csv}).code == 0);
  const auto text = slurp(csv);
  check_schema(text, "p,trials,success_rate,ci_lo,ci_hi,mean_queries,mean_restarts");
  CHECK(read_csv(text).size() == 10);

  const auto csv2 = (d / "s2.csv").string();
  REQUIRE(cli({"replay", csv + ".manifest.json", "--csv", csv2, }).code == 0);
  CHECK(slurp(csv2) == text);

  const auto r = cli({"sweep", "--p-grid", "0.5,0.25", "--trials", "10"});
  CHECK(r.code == 0);
  CHECK(read_csv(r.out).size() == 3);
  const auto n = cli({"sweep", "--nmin", "3", "--nmax", "6", "--mode", "full", "--trials", "10"});
  CHECK(n.code == 0);
  CHECK(read_csv(n.out).size() == 5);
  CHECK(cli({"sweep", "--p-grid", "0.5", "--nmin", "3", "--nmax", "4"}).code == 2);
  CHECK(cli({"sweep", "--p-grid", "0.5,zz"}).code == 2);
  const auto empty = cli({"sweep", "--p-grid", ",", "--trials", "10"});
  CHECK(empty.code == 0);
  CHECK(read_csv(empty.out).size() == 1);
}

TEST_CASE("scaling") {
  const auto r = cli({"scaling", "--nmin", "10", "--nmax", "20"});
  REQUIRE(r.code == 0);
  check_schema(r.out, "N,r_stop,queries_proposed,queries_canonical,ratio");
  const auto rows = read_csv(r.out);
  REQUIRE(rows.size() == 12);
  CHECK(std::stod(rows.back()[4]) == doctest::Approx(2.0).epsilon(0.05));
  CHECK(r.err.find("slope=") != std::string::npos);
  CHECK(cli({"scaling", "--nmin", "5", "--nmax", "2"}).code == 2);
  CHECK(cli({"scaling", "--mode", "full"}).code == 2);
}

TEST_CASE("expectation") {
  const auto r = cli({"expectation", "--grid", "default"});
  REQUIRE(r.code == 0);
  check_schema(r.out, "p,r_stop,g_at_stop,g_measured,ratio_at_stop,oracle_queries,stopped");
  const auto rows = read_csv(r.out);
  REQUIRE(rows.size() == 10);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::stod(rows[i][2]) >= 0.5);
    CHECK(rows[i][6] == "1");
  }
  const auto capped = cli({"expectation", "--grid", "0.001", "--max-iterations", "2"});
  CHECK(capped.code == 3);
}

TEST_CASE("oracle") {
  auto r = cli({"oracle", "--p", "0.5", "--burn-in", "0", "--horizon", "1"});
  REQUIRE(r.code == 0);
  check_schema(r.out, "r,prob_stop,g_at_stop");
  CHECK(read_csv(r.out)[1] == std::vector<std::string>{"0", "0.5", "0.5"});
  CHECK(r.err.find("truncated_mass=0.5") != std::string::npos);
  r = cli({"oracle", "--p", "0.01"});
  CHECK(r.code == 0);
  CHECK(read_csv(r.out).size() == 401);
  CHECK(cli({"oracle", "--p", "0.5", "--horizon", "20000"}).code == 2);
  CHECK(cli({"oracle", "--p", "1e-9"}).code == 2);
}

TEST_CASE("config files and seed environment") {
  const auto d = scratch("config");
  {
    std::ofstream cfg(d / "c.cfg");
    cfg << "# comment\np = 0.25\ntrials=300\nseed = 11\nburn_in=0\n";
  }
  const auto out1 = d / "o1";
  REQUIRE(cli({"run", "--config", (d / "c.cfg").string(), "--out", out1.string()}).code == 0);
  auto res = json::parse(slurp(out1 / "results.json"));
  CHECK(res["stats"]["trials"] == 300);
  CHECK(res["config"]["burn_in"] == 0);
  CHECK(res["master_seed"] == 11);

  const auto out2 = d / "o2";
  REQUIRE(cli({"run", "--config", (d / "c.cfg").string(), "--trials", "50", "--out",
               out2.string()})
              .code == 0);
  CHECK(json::parse(slurp(out2 / "results.json"))["stats"]["trials"] == 50);
  CHECK(cli({"run", "--config", (d / "missing.cfg").string()}).code == 2);

  ::setenv(fpsearch::cli::kSeedEnv, "4242", 1);
  const auto out3 = d / "o3";
  REQUIRE(cli({"run", "--p", "0.5", "--trials", "10", "--out", out3.string()}).code == 0);
  ::unsetenv(fpsearch::cli::kSeedEnv);
  CHECK(json::parse(slurp(out3 / "manifest.json"))["master_seed"] == 4242);
}

TEST_CASE("replay rejects bad manifests") {
  const auto d = scratch("replay_bad");
  {
    std::ofstream(d / "x.json") << "{\"tool\": \"other\"}";
    std::ofstream(d / "y.json") << "not json";
  }
  CHECK(cli({"replay", (d / "x.json").string()}).code == 2);
  CHECK(cli({"replay", (d / "y.json").string()}).code == 2);
  CHECK(cli({"replay", (d / "none.json").string()}).code == 2);
}
