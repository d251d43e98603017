#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

// End-to-end tests for the command-line driver.  The binary and the bundled
// scenario directory arrive via DESCORE_BIN / DESCORE_SCENARIOS (set by the
// test harness), so these cases exercise exactly what a user would run.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult run_cli(const std::string& args) {
  const char* bin = std::getenv("DESCORE_BIN");
  REQUIRE(bin != nullptr);
  const std::string cmd = std::string(bin) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (const std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = std::move(out);
  return r;
}

std::string scenario(const std::string& name) {
  const char* dir = std::getenv("DESCORE_SCENARIOS");
  REQUIRE(dir != nullptr);
  return std::string(dir) + "/" + name;
}

// Scratch directory that cleans up after each test case.
struct TmpDir {
  fs::path path;
  TmpDir() {
    path = fs::temp_directory_path() /
           ("descore-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TmpDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str(const std::string& file = "") const {
    return file.empty() ? path.string() : (path / file).string();
  }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  json j;
  in >> j;
  return j;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

const json* find_check(const json& report, const std::string& name) {
  for (const auto& c : report["checks"])
    if (c["name"] == name) return &c;
  return nullptr;
}

}  // namespace

TEST_CASE("analyze passes the worked example end to end") {
  TmpDir tmp;
  const auto r = run_cli("analyze " + scenario("rain-ceremony.json") + " --out " + tmp.str());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("PASS score-proper") != std::string::npos);
  CHECK(r.output.find("PASS strong-participation") != std::string::npos);
  CHECK(r.output.find("OK: 6/6 checks passed") != std::string::npos);

  const json report = read_json(tmp.str("rain-ceremony_analyze_report.json"));
  CHECK(report["experiment"] == "analyze");
  CHECK(report["summary"]["pass"] == true);
  CHECK(report["summary"]["checks"] == 6);
  CHECK(report["inputs"]["name"] == "rain-ceremony");
  CHECK(report.contains("timestamp"));
  REQUIRE(report["notes"]["boundaries"].size() == 1);
  CHECK(report["notes"]["boundaries"][0]["tau"] == 0.4);
  CHECK(report["notes"]["boundaries"][0]["pair"] == json({"park", "banquet"}));
  CHECK(report["notes"]["nonempty_regions"] == json({"park", "banquet"}));

  const std::string csv = read_text(tmp.str("rain-ceremony_analyze.csv"));
  CHECK(csv.rfind("p0,p1,decision,cost_value,expert_optimal,inherent,compensation\n", 0) == 0);
  CHECK(line_count(csv) == 402);  // header + 401 grid points at k=400
}

TEST_CASE("analyze flags the improper rule from an adversarial estimate") {
  TmpDir tmp;
  const auto r =
      run_cli("analyze " + scenario("adversarial-box-corner.json") + " --out " + tmp.str());
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("FAIL compensation-proper") != std::string::npos);
  CHECK(r.output.find("FAILED: 5/6 checks passed") != std::string::npos);

  // Every failed check carries a witness: here a near-boundary belief that
  // gains about 2*delta by reporting across.
  const json report = read_json(tmp.str("adversarial-box-corner_analyze_report.json"));
  const json* failed = find_check(report, "compensation-proper");
  REQUIRE(failed != nullptr);
  CHECK((*failed)["pass"] == false);
  REQUIRE(failed->contains("witness"));
  CHECK((*failed)["witness"]["gap"].get<double>() <= -1.9);
  CHECK((*failed)["witness"]["belief"].size() == 2);
}

TEST_CASE("aligned bias zeroes the gap rule") {
  TmpDir tmp;
  const auto r = run_cli("analyze " + scenario("aligned-expert.json") + " --out " + tmp.str());
  CHECK(r.exit_code == 0);
  const json report = read_json(tmp.str("aligned-expert_analyze_report.json"));
  CHECK(report["notes"]["gap_rule_identically_zero"] == true);
  CHECK(report["summary"]["pass"] == true);
}

TEST_CASE("bounds keeps gains under the estimate-error ceiling") {
  TmpDir tmp;
  const auto r = run_cli("bounds " + scenario("rain-ceremony.json") + " --out " + tmp.str());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("PASS incentive-bound") != std::string::npos);

  const json report = read_json(tmp.str("rain-ceremony_bounds_report.json"));
  CHECK(report["notes"]["estimate_default"] == "uniform_lambda=0.5");
  CHECK(report["notes"]["delta"] == 1.0);
  const json* incentive = find_check(report, "incentive-bound");
  REQUIRE(incentive != nullptr);
  CHECK((*incentive)["bound"] == 1.0);  // uniform estimates halve the 2-delta ceiling
  CHECK((*incentive)["observed"].get<double>() <= 1.0 + 1e-6);

  const std::string csv = read_text(tmp.str("rain-ceremony_bounds.csv"));
  CHECK(csv.rfind("p0,p1,r0,r1,gain,deviation,loss\n", 0) == 0);
  CHECK(line_count(csv) == 402);
}

TEST_CASE("bounds on the adversarial corner approaches two delta") {
  TmpDir tmp;
  const auto r =
      run_cli("bounds " + scenario("adversarial-box-corner.json") + " --out " + tmp.str());
  CHECK(r.exit_code == 0);
  const json report = read_json(tmp.str("adversarial-box-corner_bounds_report.json"));
  const json* incentive = find_check(report, "incentive-bound");
  REQUIRE(incentive != nullptr);
  CHECK((*incentive)["bound"] == 2.0);
  const double observed = (*incentive)["observed"].get<double>();
  CHECK(observed >= 1.9);
  CHECK(observed <= 2.0 + 1e-6);
}

TEST_CASE("bounds covers a ternary scenario") {
  TmpDir tmp;
  const auto r =
      run_cli("bounds " + scenario("three-boundary-ternary.json") + " --out " + tmp.str());
  CHECK(r.exit_code == 0);
  const json report = read_json(tmp.str("three-boundary-ternary_bounds_report.json"));
  CHECK(report["summary"]["pass"] == true);
  const json* incentive = find_check(report, "incentive-bound");
  REQUIRE(incentive != nullptr);
  CHECK((*incentive)["bound"] == 1.0);  // every box entry spreads 1.0, so delta = 1
  CHECK(report["notes"]["delta"] == 1.0);
}

TEST_CASE("design emits a cost file that survives a bounds round trip") {
  TmpDir tmp;
  const auto r = run_cli("design " + scenario("rain-ceremony.json") + " --out " + tmp.str());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("PASS sigma-feasible") != std::string::npos);
  CHECK(r.output.find("PASS verify-design") != std::string::npos);

  const json cost_file = read_json(tmp.str("rain-ceremony_cost.json"));
  CHECK(cost_file["base"] == "strong");
  CHECK(cost_file["cost"]["kind"] == "designed");
  const auto knots = cost_file["cost"]["knots"].get<std::vector<double>>();
  REQUIRE(knots.size() == 5);
  CHECK(knots[1] == 0.375);  // tau - eps
  CHECK(knots[2] == 0.4);    // the decision boundary itself
  CHECK(knots[3] == 0.42500000000000004);
  const json& boundary = cost_file["profile"]["boundaries"][0];
  CHECK(boundary["tau"] == 0.4);
  CHECK(boundary["pair_gradient"] == 6.0);
  CHECK(boundary["m_factor"].get<double>() == doctest::Approx(56.56854249492381).epsilon(1e-12));

  // Feed the emitted cost back through bounds: the local loss check applies
  // now and the sweep stays under sigma.
  json chained = read_json(scenario("rain-ceremony.json"));
  chained["name"] = "rain-designed";
  chained["cost"] = cost_file["cost"];
  {
    std::ofstream out(tmp.str("rain-designed.json"));
    out << chained.dump(2) << "\n";
  }
  const auto rb = run_cli("bounds " + tmp.str("rain-designed.json") + " --out " + tmp.str());
  CHECK(rb.exit_code == 0);
  CHECK(rb.output.find("PASS loss-bound-local") != std::string::npos);
  const json report = read_json(tmp.str("rain-designed_bounds_report.json"));
  const json* local = find_check(report, "loss-bound-local");
  REQUIRE(local != nullptr);
  CHECK((*local)["sigma"] == 0.3);
  CHECK((*local)["worst_loss"].get<double>() <= 0.3);
}

TEST_CASE("design reports the largest workable sigma when infeasible") {
  TmpDir tmp;
  const json overlap = {
      {"version", 1},
      {"name", "overlap"},
      {"dm", {{"rows", {{0.0, 10.0}, {6.0, 6.0}, {8.0, 2.0}}}}},
      {"bias", {{"rows", {{0.0, 0.0}, {1.0, 1.0}, {2.0, 2.0}}}}},
      {"box",
       {{"lower", {{"rows", {{-0.25, -0.25}, {0.75, 0.75}, {1.75, 1.75}}}}},
        {"upper", {{"rows", {{0.25, 0.25}, {1.25, 1.25}, {2.25, 2.25}}}}}}},
      {"sigma", 1.5},
  };
  {
    std::ofstream out(tmp.str("overlap.json"));
    out << overlap.dump(2) << "\n";
  }
  const auto r = run_cli("design " + tmp.str("overlap.json") + " --out " + tmp.str());
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("FAIL sigma-feasible") != std::string::npos);
  const json report = read_json(tmp.str("overlap_design_report.json"));
  const json* check = find_check(report, "sigma-feasible");
  REQUIRE(check != nullptr);
  CHECK((*check)["feasible_sigma"].get<double>() == doctest::Approx(1.28).epsilon(1e-9));
  CHECK((*check)["reason"].get<std::string>().find("overlap") != std::string::npos);
}

TEST_CASE("design rejects non-binary outcome spaces") {
  TmpDir tmp;
  const auto r =
      run_cli("design " + scenario("three-boundary-ternary.json") + " --out " + tmp.str());
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("exactly two outcomes") != std::string::npos);
}

TEST_CASE("the identical-bias market settles cleanly") {
  TmpDir tmp;
  const auto r = run_cli("market " + scenario("market-identical.json") + " --out " + tmp.str());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("PASS ledger-conservation") != std::string::npos);

  const json report = read_json(tmp.str("market-identical_market_report.json"));
  CHECK(report["notes"]["participation_violations"] == 0);
  const json& summary = report["notes"]["summary"];
  CHECK(summary["conservation_residual"] == 0.0);
  CHECK(summary["house_outlay"].get<double>() == doctest::Approx(4.2312).epsilon(1e-12));
  CHECK(summary["final_owner"] == "e3");

  const std::string events_text = read_text(tmp.str("market-identical_events.jsonl"));
  REQUIRE(line_count(events_text) == 4);  // three steps plus the settlement
  std::istringstream lines(events_text);
  std::string line;
  std::getline(lines, line);
  const json first = json::parse(line);
  CHECK(first["event"] == "step");
  CHECK(first["expert"] == "e1");
  CHECK(first["report"] == json({0.3, 0.7}));
  CHECK(first["obligations"].empty());  // the house seeds the first entry
  std::string last;
  while (std::getline(lines, line))
    if (!line.empty()) last = line;
  const json settlement = json::parse(last);
  CHECK(settlement["event"] == "settlement");
  CHECK(settlement["obligations"][0]["payee"] == "e3");
}

TEST_CASE("ordering entrants by stake prevents blocked entries") {
  TmpDir tmp;
  const auto r = run_cli("market " + scenario("market-decreasing.json") + " --out " + tmp.str());
  CHECK(r.exit_code == 0);
  const json report = read_json(tmp.str("market-decreasing_market_report.json"));
  CHECK(report["notes"]["participation_violations"] == 0);

  // order_by_bias moved the strong-stakes expert to the front.
  const std::string events_text = read_text(tmp.str("market-decreasing_events.jsonl"));
  std::istringstream lines(events_text);
  std::string line;
  std::getline(lines, line);
  CHECK(json::parse(line)["expert"] == "strong");

  // Without the subsidy or the ordering, the second entry is blocked.
  json divergent = read_json(scenario("market-decreasing.json"));
  divergent["name"] = "market-divergent";
  divergent["scheme"] = "none";
  divergent["order_by_bias"] = false;
  divergent["experts"][0]["beliefs"] = {0.3, 0.7};
  divergent["experts"][1]["beliefs"] = {0.45, 0.55};
  {
    std::ofstream out(tmp.str("market-divergent.json"));
    out << divergent.dump(2) << "\n";
  }
  const auto rd = run_cli("market " + tmp.str("market-divergent.json") + " --out " + tmp.str());
  CHECK(rd.exit_code == 0);  // violations are reported, not fatal
  const json dreport = read_json(tmp.str("market-divergent_market_report.json"));
  CHECK(dreport["notes"]["participation_violations"].get<int>() >= 1);
}

TEST_CASE("identical runs match byte for byte modulo the timestamp") {
  TmpDir a, b;
  const auto ra = run_cli("bounds " + scenario("rain-ceremony.json") + " --out " + a.str());
  const auto rb = run_cli("bounds " + scenario("rain-ceremony.json") + " --out " + b.str());
  REQUIRE(ra.exit_code == 0);
  REQUIRE(rb.exit_code == 0);
  json ja = read_json(a.str("rain-ceremony_bounds_report.json"));
  json jb = read_json(b.str("rain-ceremony_bounds_report.json"));
  ja.erase("timestamp");
  jb.erase("timestamp");
  CHECK(ja == jb);
  CHECK(read_text(a.str("rain-ceremony_bounds.csv")) == read_text(b.str("rain-ceremony_bounds.csv")));

  // Seeded design runs reproduce exactly as well.
  const auto da = run_cli("design " + scenario("rain-ceremony.json") + " --seed 7 --out " + a.str());
  const auto db = run_cli("design " + scenario("rain-ceremony.json") + " --seed 7 --out " + b.str());
  REQUIRE(da.exit_code == 0);
  REQUIRE(db.exit_code == 0);
  json pa = read_json(a.str("rain-ceremony_design_report.json"));
  json pb = read_json(b.str("rain-ceremony_design_report.json"));
  pa.erase("timestamp");
  pb.erase("timestamp");
  CHECK(pa == pb);
  CHECK(read_text(a.str("rain-ceremony_cost.json")) == read_text(b.str("rain-ceremony_cost.json")));
}

TEST_CASE("grid and tolerance flags override the scenario") {
  TmpDir tmp;
  const auto r = run_cli("bounds " + scenario("rain-ceremony.json") + " --grid 200 --tol 1e-7 --out " +
                         tmp.str());
  CHECK(r.exit_code == 0);
  const std::string csv = read_text(tmp.str("rain-ceremony_bounds.csv"));
  CHECK(line_count(csv) == 202);  // header + 201 points at the overridden k=200
}

TEST_CASE("invalid inputs exit with code 2 and name the problem") {
  TmpDir tmp;
  const auto missing = run_cli("bounds " + tmp.str("nope.json"));
  CHECK(missing.exit_code == 2);
  CHECK(missing.output.find("cannot open scenario file") != std::string::npos);

  {
    std::ofstream out(tmp.str("badmatrix.json"));
    out << R"({"version": 1, "dm": {"rows": [[1.0, 2.0], [3.0, 4.0, 5.0]]}})";
  }
  const auto bad = run_cli("analyze " + tmp.str("badmatrix.json") + " --out " + tmp.str());
  CHECK(bad.exit_code == 2);
  CHECK(bad.output.find("dm.rows[1]: expected 2 entries, got 3") != std::string::npos);

  // Commands insist on the sections they need.
  const auto no_market = run_cli("market " + scenario("rain-ceremony.json") + " --out " + tmp.str());
  CHECK(no_market.exit_code == 2);
  CHECK(no_market.output.find("initial: required by this command but missing") != std::string::npos);
  const auto no_box = run_cli("bounds " + scenario("aligned-expert.json") + " --out " + tmp.str());
  CHECK(no_box.exit_code == 2);
  CHECK(no_box.output.find("box") != std::string::npos);
}

TEST_CASE("the output directory falls back to the environment") {
  TmpDir env_dir, flag_dir;
  setenv("DESCORE_OUT_DIR", env_dir.str().c_str(), 1);
  const auto r = run_cli("analyze " + scenario("aligned-expert.json"));
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(env_dir.path / "aligned-expert_analyze_report.json"));
  CHECK(fs::exists(env_dir.path / "aligned-expert_analyze.csv"));

  // An explicit --out wins over the environment.
  const auto r2 = run_cli("analyze " + scenario("aligned-expert.json") + " --out " + flag_dir.str());
  CHECK(r2.exit_code == 0);
  CHECK(fs::exists(flag_dir.path / "aligned-expert_analyze_report.json"));
  unsetenv("DESCORE_OUT_DIR");
}
