#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "test_support.hpp"

using nlohmann::json;
using shadowlab::testing::fixture_path;

namespace {

struct CliRun {
  int code = -1;
  std::string output;  // stdout and stderr, interleaved
};

CliRun run_cli(const std::string& args) {
  CliRun run;
  const std::string cmd = std::string(SHADOWLAB_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof(buf), pipe)) > 0) run.output.append(buf, got);
  int status = pclose(pipe);
  REQUIRE(status != -1);
  run.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return run;
}

json parse_report(const CliRun& run) {
  CAPTURE(run.output);
  REQUIRE(run.code == 0);
  return json::parse(run.output);
}

std::string quoted(const std::string& path) { return "\"" + path + "\""; }

}  // namespace

TEST_CASE("cli rejects missing or unknown subcommands") {
  CHECK(run_cli("").code == 1);
  CHECK(run_cli("no-such-command").code == 1);
  CHECK(run_cli("--help").code == 0);
  CHECK(run_cli("transversality").code == 1);  // --system is required
}

TEST_CASE("transversality subcommand classifies fixtures") {
  json obstructed =
      parse_report(run_cli("transversality --system " + quoted(fixture_path("ntrans3d.json"))));
  CHECK(obstructed["command"] == "transversality");
  CHECK(obstructed["verdict"] == "nontransversal");
  CHECK(obstructed["defect_dim"] == 1);
  CHECK(obstructed["tool"] == "shadowlab");

  json plain =
      parse_report(run_cli("transversality --system " + quoted(fixture_path("trans3d.json"))));
  CHECK(plain["verdict"] == "transversal");
  CHECK(plain["defect_dim"] == 0);
}

TEST_CASE("reports can be written to a file instead of stdout") {
  namespace fs = std::filesystem;
  fs::path out = fs::temp_directory_path() / "shadowlab_cli_report.json";
  fs::remove(out);
  CliRun run = run_cli("transversality --system " + quoted(fixture_path("ntrans3d.json")) +
                       " --out " + quoted(out.string()));
  CHECK(run.code == 0);
  CHECK(run.output.empty());
  std::ifstream file(out);
  REQUIRE(file.good());
  json report = json::parse(file);
  CHECK(report["verdict"] == "nontransversal");
  fs::remove(out);
}

TEST_CASE("spiral-cert validates parameters and certifies small cases") {
  CliRun bad = run_cli("spiral-cert --a -1");
  CHECK(bad.code == 1);
  CHECK(bad.output.find("error:") != std::string::npos);

  json report = parse_report(
      run_cli("spiral-cert --kind line1d --a 1 --eps 0.5 --L 1 --trials 2000 --seed 7"));
  CHECK(report["certificate"]["worst"].get<double>() < 0.5);
  CHECK(report["certificate"]["kind"] == "line1d");
  CHECK(report["config"]["trials"] == 2000);
}

TEST_CASE("defect subcommand needs exactly one input and reports the measure") {
  CliRun neither = run_cli("defect");
  CHECK(neither.code == 1);
  CHECK(neither.output.find("exactly one") != std::string::npos);
  CliRun both = run_cli("defect --system " + quoted(fixture_path("ntrans3d.json")) +
                        " --field " + quoted(fixture_path("sink3d.json")));
  CHECK(both.code == 1);

  json clean = parse_report(run_cli("defect --field " + quoted(fixture_path("sink3d.json")) +
                                    " --x0 1,1,1 --t0 0 --t1 5 --noise 0"));
  CHECK(clean["defect"].get<double>() <= 1e-9);
  CHECK(clean["grid_step"].get<double>() > 0.0);
  CHECK(!clean.contains("ratio"));

  json glued = parse_report(run_cli("defect --system " + quoted(fixture_path("ntrans3d.json")) +
                                    " --d 1e-2"));
  double defect = glued["defect"].get<double>();
  CHECK(defect > 0.0);
  CHECK(glued["ratio"].get<double>() == doctest::Approx(defect / 1e-2));
}

TEST_CASE("shadow-search on a plain field finds the midpoint of a jump") {
  const std::string base = "shadow-search --field " + quoted(fixture_path("zerofield1d.json")) +
                           " --jump 0.1 --t-back 2 --t-fwd 2 --starts 6 --budget 1500 --seed 5";
  json report = parse_report(run_cli(base));
  double best = report["result"]["best_eps"].get<double>();
  CHECK(best == doctest::Approx(0.05).epsilon(1e-4));

  CHECK(run_cli(base + " --target 0.06").code == 0);
  CliRun miss = run_cli(base + " --target 0.01");
  CHECK(miss.code == 2);
  json missed = json::parse(miss.output);
  CHECK(!missed["result"].contains("feasible_at"));
}

TEST_CASE("nosubset rejects an oversized tracking radius and reports the scan") {
  CliRun bad = run_cli("nosubset --system " + quoted(fixture_path("sconn2d.json")) + " --eps 10");
  CHECK(bad.code == 1);
  CHECK(bad.output.find("unstable offset of alpha") != std::string::npos);

  json report = parse_report(run_cli(
      "nosubset --system " + quoted(fixture_path("sconn2d.json")) +
      " --xgrid 10 --hsamples 20"));
  CHECK(report["report"]["feasible"] == false);
  CHECK(report["report"]["all_match"] == true);
  CHECK(!report["report"].contains("points"));
  CHECK(report["config"]["eps"] == "auto");
}

TEST_CASE("counterexample emits its sweep as CSV") {
  namespace fs = std::filesystem;
  fs::path csv = fs::temp_directory_path() / "shadowlab_cli_sweep.csv";
  fs::path out = fs::temp_directory_path() / "shadowlab_cli_sweep.json";
  fs::remove(csv);
  fs::remove(out);

  CliRun run = run_cli("counterexample --system " + quoted(fixture_path("ntrans3d.json")) +
                       " --L 1 --d 1e-2 --starts 4 --budget 400 --seed 2 --csv " +
                       quoted(csv.string()) + " --out " + quoted(out.string()));
  CHECK((run.code == 0 || run.code == 2));

  std::ifstream csv_file(csv);
  REQUIRE(csv_file.good());
  std::string header;
  std::getline(csv_file, header);
  CHECK(header == "L,d,best_eps,ratio,class_a,verdict,obstruction_verdict");

  std::ifstream json_file(out);
  REQUIRE(json_file.good());
  json report = json::parse(json_file);
  REQUIRE(report["rows"].size() == 1);
  CHECK(report["rows"][0]["L"] == 1.0);
  CHECK(report.contains("expectation_met"));
  fs::remove(csv);
  fs::remove(out);
}

TEST_CASE("reports are deterministic apart from the timestamp") {
  const std::string cmd = "defect --field " + quoted(fixture_path("sink3d.json")) +
                          " --x0 1,1,1 --t0 0 --t1 5 --noise 1e-3 --seed 9";
  json first = parse_report(run_cli(cmd));
  json second = parse_report(run_cli(cmd));
  first.erase("timestamp");
  second.erase("timestamp");
  CHECK(first.dump() == second.dump());
}
