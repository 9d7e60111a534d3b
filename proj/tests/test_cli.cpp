#include "nlspec/scenario.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace nlspec;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_file(const fs::path &p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string &tag) {
  const fs::path dir = fs::temp_directory_path() / ("nlspec_cli_test_" + std::to_string(::getpid()) + "_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path &p, const json &j) { std::ofstream(p) << j.dump(2); }

int run_cli(const std::string &args) {
  const char *cli = std::getenv("NLSPEC_CLI");
  REQUIRE(cli != nullptr);
  const std::string cmd = std::string(cli) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

json well_scenario() {
  return json::parse(R"({
    "name": "well", "task": "essential",
    "grid": {"dim": 1, "half_width": 40.0, "points": 512},
    "kernel": {"name": "gaussian"},
    "potential": {"name": "box", "amplitude": -0.5, "half_width": 1.0}
  })");
}

json small_eigs_scenario() {
  return json::parse(R"({
    "name": "small_eigs", "task": "eigs",
    "grid": {"dim": 1, "half_width": 40.0, "points": 512},
    "kernel": {"name": "gaussian"},
    "potential": {"name": "power_tail", "amplitude": 1.0, "gamma": 1.0},
    "params": {"threshold": 1.0, "k": 3},
    "seed": 5
  })");
}

} // namespace

TEST_CASE("shipped scenarios round-trip") {
  std::size_t count = 0;
  for (const auto &entry : fs::directory_iterator("scenarios")) {
    if (entry.path().extension() != ".json")
      continue;
    ++count;
    const Scenario a = Scenario::load(entry.path());
    const json ja = a.to_json();
    const Scenario b = Scenario::from_json(ja, a.base_dir);
    CHECK(b.to_json() == ja);
    CHECK(json::parse(ja.dump()) == ja);
    CHECK(a.name == entry.path().stem().string());
  }
  CHECK(count >= 10);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(Scenario::from_json(well_scenario()));
  auto bad = well_scenario();
  bad["grid"]["points"] = 100;
  CHECK_THROWS_AS(Scenario::from_json(bad), ConfigError);
  bad = well_scenario();
  bad["typo"] = 1;
  CHECK_THROWS_AS(Scenario::from_json(bad), ConfigError);
  bad = well_scenario();
  bad["grid"]["spacing"] = 0.1;
  CHECK_THROWS_AS(Scenario::from_json(bad), ConfigError);
  bad = well_scenario();
  bad["params"] = {{"bins", 10}, {"binz", 3}};
  CHECK_THROWS_AS(Scenario::from_json(bad), ConfigError);
  bad = well_scenario();
  bad["kernel"] = {{"name", "no_such_kernel"}};
  CHECK_THROWS_AS(Scenario::from_json(bad), ConfigError);
  bad = well_scenario();
  bad["task"] = "solve";
  CHECK_THROWS_AS(Scenario::from_json(bad), ConfigError);
  bad = well_scenario();
  bad["sweep"] = {{"task", "essential"}, {"L_ladder", {20, 40}}};
  CHECK_THROWS_AS(Scenario::from_json(bad), ConfigError);

  auto sweep = small_eigs_scenario();
  sweep["task"] = "sweep";
  sweep["sweep"] = {{"task", "eigs"}, {"L_ladder", json::array()}};
  CHECK_THROWS_AS(Scenario::from_json(sweep), ConfigError);
  sweep["sweep"] = {{"task", "sweep"}, {"L_ladder", {20, 40}}};
  CHECK_THROWS_AS(Scenario::from_json(sweep), ConfigError);
  sweep["sweep"] = {{"task", "eigs"}, {"L_ladder", {20, 30}}, {"fixed_spacing", true}};
  CHECK_THROWS_AS(run_sweep(Scenario::from_json(sweep)), ConfigError);

  const auto defaults = task_defaults(Task::eigs);
  CHECK(defaults.contains("threshold"));
  CHECK(task_from_string("certify_t5") == Task::certify_t5);
  CHECK_THROWS_AS(task_from_string("certify"), ConfigError);
  CHECK_THROWS_AS(format_from_string("xml"), ConfigError);
}

TEST_CASE("essential task report") {
  const json r = run_scenario(Scenario::from_json(well_scenario()));
  CHECK(r["status"] == "ok");
  CHECK(r["results"]["essential_spectrum"] == json::parse("[[-0.5,-0.5],[0.0,1.0]]"));
  REQUIRE(r["results"]["gaps"].size() == 1);
  CHECK(r["results"]["gaps"][0]["lo"] == -0.5);
  CHECK(r["results"]["gaps"][0]["hi"] == 0.0);
  CHECK(r["tool"]["version"] == tool_version);
  CHECK(r["input_checksums"]["scenario_sha256"].get<std::string>().size() == 64);
  CHECK(r.contains("timings"));
  CHECK(report_passed(r));
  CHECK(exit_code_for(r, true) == exit_ok);
}

TEST_CASE("weyl task report") {
  json s = json::parse(R"({
    "name": "weyl_small", "task": "weyl",
    "grid": {"dim": 1, "half_width": 201.06192982974676, "points": 1024},
    "kernel": {"name": "gaussian"}, "potential": "zero",
    "params": {"lambda": 0.6065306597126334, "mode": "symbol_point", "n_list": [4, 16, 64]}
  })");
  const json r = run_scenario(Scenario::from_json(s));
  REQUIRE(r["status"] == "ok");
  const auto &e = r["results"]["entries"];
  REQUIRE(e.size() == 3);
  CHECK(e[1]["residual"].get<double>() < e[0]["residual"].get<double>());
  CHECK(e[2]["residual"].get<double>() < e[1]["residual"].get<double>());
  CHECK(r["results"]["decreasing"] == true);

  s["grid"]["half_width"] = 20.106192982974676;
  const json small = run_scenario(Scenario::from_json(s));
  CHECK(small["status"] == "error");
  CHECK(small["error"]["kind"] == "sizing");
  CHECK(small["error"].contains("max_feasible"));
  CHECK(exit_code_for(small, false) == exit_sizing);
}

TEST_CASE("determinism") {
  const Scenario sc = Scenario::from_json(small_eigs_scenario());
  json a = run_scenario(sc);
  json b = run_scenario(sc);
  CHECK(determinism_hash(a) == determinism_hash(b));
  a.erase("timings");
  b.erase("timings");
  CHECK(a.dump() == b.dump());
  json c = a;
  c["timings"] = {{"total_seconds", 123.0}};
  CHECK(determinism_hash(c) == determinism_hash(a));
  RunOptions other;
  other.seed = 6;
  CHECK(determinism_hash(run_scenario(sc, other)) != determinism_hash(a));
}

TEST_CASE("emit formats") {
  const fs::path dir = scratch("emit");
  const json r = run_scenario(Scenario::from_json(small_eigs_scenario()));
  REQUIRE(r["status"] == "ok");

  const auto js = emit_report(r, ReportFormat::json, dir, "small");
  REQUIRE(js.size() == 1);
  CHECK(read_file(js[0]) == r);

  const auto csv = emit_report(r, ReportFormat::csv, dir, "small");
  REQUIRE(!csv.empty());
  const std::string table = slurp(dir / "small_eigs.csv");
  CHECK(table.rfind("lambda,residual,boundary_mass,classification\n", 0) == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 1 + static_cast<long>(r["results"]["pairs"].size()));

  const auto dat = emit_report(r, ReportFormat::plotdata, dir, "small");
  REQUIRE(!dat.empty());
  for (const auto &p : dat) {
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#')
        continue;
      std::istringstream row(line);
      double x = 0, y = 0;
      std::string extra;
      CHECK(static_cast<bool>(row >> x >> y));
      CHECK(!(row >> extra));
    }
  }
  CHECK_THROWS(emit_report(r, ReportFormat::json, dir / "small_eigs.csv" / "sub", "x"));
  fs::remove_all(dir);
}

TEST_CASE("ell series plot data is monotone for the Gaussian symbol") {
  const fs::path dir = scratch("ell");
  json s = json::parse(R"({
    "name": "ell_gauss", "task": "certify_heavy",
    "grid": {"dim": 1, "half_width": 512.0, "points": 4096},
    "kernel": {"name": "gaussian"},
    "potential": {"name": "power_tail", "amplitude": 1.0, "gamma": 0.2},
    "params": {"confirm": false}
  })");
  const json r = run_scenario(Scenario::from_json(s));
  REQUIRE(r["status"] == "ok");
  emit_report(r, ReportFormat::plotdata, dir, "ell_gauss");
  REQUIRE(fs::exists(dir / "ell_gauss_ell.dat"));
  std::ifstream in(dir / "ell_gauss_ell.dat");
  std::string line;
  double prev_x = 0.0, prev_y = -1.0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#')
      continue;
    std::istringstream row(line);
    double x = 0, y = 0;
    row >> x >> y;
    if (rows > 0) {
      CHECK(x > prev_x);
      CHECK(y > prev_y);
    }
    // Closed form sqrt(pi) (1 - (1 + r^2/2)^{-1/2}).
    CHECK(std::abs(y - std::sqrt(M_PI) * (1.0 - 1.0 / std::sqrt(1.0 + 0.5 * x * x))) < 1e-8);
    prev_x = x;
    prev_y = y;
    ++rows;
  }
  CHECK(rows >= 10);
  fs::remove_all(dir);
}

TEST_CASE("sweep bundle") {
  json s = small_eigs_scenario();
  s["task"] = "sweep";
  s["grid"] = {{"dim", 1}, {"half_width", 20.0}, {"points", 128}};
  s["params"] = {{"threshold", 1.001}, {"k", 8}};
  s["sweep"] = {{"task", "eigs"}, {"L_ladder", {20, 40, 80}}, {"fixed_spacing", true}};
  RunOptions o;
  o.threads = 2;
  const json r = run_sweep(Scenario::from_json(s), o);
  CHECK(r["status"] == "ok");
  const auto &rows = r["results"]["rows"];
  REQUIRE(rows.size() == 3);
  for (std::size_t i = 1; i < rows.size(); ++i)
    CHECK(rows[i]["eigencount"].get<int>() >= rows[i - 1]["eigencount"].get<int>());
  CHECK(r["verdict"]["pass"] == true);
  const json again = run_sweep(Scenario::from_json(s));
  CHECK(determinism_hash(again) == determinism_hash(r));
}

TEST_CASE("command line") {
  const fs::path dir = scratch("cli");
  write_json(dir / "well.json", well_scenario());
  CHECK(run_cli("essential --config " + (dir / "well.json").string() + " --out " + (dir / "out").string()) == exit_ok);
  CHECK(fs::exists(dir / "out" / "well.json"));
  CHECK(read_file(dir / "out" / "well.json")["results"]["essential_spectrum"].size() == 2);

  CHECK(run_cli("emit --config " + (dir / "out" / "well.json").string() + " --format csv --out " +
                (dir / "emitted").string()) == exit_ok);
  CHECK(fs::exists(dir / "emitted" / "well_essential.csv"));

  // Malformed config: exit code 2 and no report at all.
  auto bad = well_scenario();
  bad["grid"]["points"] = 100;
  write_json(dir / "bad.json", bad);
  CHECK(run_cli("essential --config " + (dir / "bad.json").string() + " --out " + (dir / "bad_out").string()) ==
        exit_config);
  CHECK(!fs::exists(dir / "bad_out"));

  // Subcommand and task disagree.
  CHECK(run_cli("eigs --config " + (dir / "well.json").string() + " --out " + (dir / "x").string()) == exit_config);
  CHECK(run_cli("essential --config " + (dir / "missing.json").string()) == exit_config);
  CHECK(run_cli("essential --config " + (dir / "well.json").string() + " --format xml") == exit_config);

  // A failing certificate is a valid outcome unless --expect-pass is given.
  json gap = json::parse(R"({
    "name": "gap_wide", "task": "gap",
    "grid": {"dim": 1, "half_width": 40.0, "points": 512},
    "kernel": {"name": "gaussian"},
    "potential": {"name": "power_tail", "amplitude": 1.0, "gamma": 1.0},
    "params": {"v1": {"name": "box", "amplitude": 3.0, "half_width": 8.0, "center": [6.0]}}
  })");
  write_json(dir / "gap.json", gap);
  const std::string gap_args = "gap --config " + (dir / "gap.json").string() + " --out " + (dir / "gap").string();
  CHECK(run_cli(gap_args) == exit_ok);
  CHECK(read_file(dir / "gap" / "gap_wide.json")["verdict"]["pass"] == false);
  CHECK(run_cli(gap_args + " --expect-pass") == exit_certificate_fail);

  // Same seed, same hash across processes.
  write_json(dir / "eigs.json", small_eigs_scenario());
  CHECK(run_cli("eigs --config " + (dir / "eigs.json").string() + " --out " + (dir / "e1").string()) == exit_ok);
  CHECK(run_cli("eigs --config " + (dir / "eigs.json").string() + " --out " + (dir / "e2").string() + " --threads 2") ==
        exit_ok);
  CHECK(determinism_hash(read_file(dir / "e1" / "small_eigs.json")) ==
        determinism_hash(read_file(dir / "e2" / "small_eigs.json")));
  fs::remove_all(dir);
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(ErrorKind::config) == exit_config);
  CHECK(exit_code_for(ErrorKind::sizing) == exit_sizing);
  CHECK(exit_code_for(ErrorKind::convergence) == exit_convergence);
  json failed = {{"status", "ok"}, {"verdict", {{"pass", false}}}};
  CHECK(exit_code_for(failed, false) == exit_ok);
  CHECK(exit_code_for(failed, true) == exit_certificate_fail);
  CHECK(!report_passed(failed));
  json partial = {{"status", "partial"}, {"verdict", json::object()}};
  CHECK(exit_code_for(partial, false) == exit_convergence);
}
