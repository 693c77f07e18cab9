#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "barw/cli.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace barw;
using namespace barw::cli;
namespace fs = std::filesystem;

namespace {

Settings settings(const std::string& text) {
  std::istringstream in(text);
  return Settings::parse(in, "test.cfg");
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("barw-cli-test-" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int manifests_in(const fs::path& dir) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().filename() == kManifestName;
  return n;
}

}  // namespace

TEST_CASE("config parsing: values, comments, dotted keys") {
  Settings s = settings("# fixture\nmodel.mu = 2.5\n\nmodel.R=20   # radius\nsim.snapshots = 0, 5,10\nprofile.search = false\n");
  CHECK(s.get_double("model.mu", 0) == 2.5);
  CHECK(s.get_int("model.R", 0) == 20);
  CHECK(s.get_int_list("sim.snapshots", {}) == std::vector<std::int64_t>{0, 5, 10});
  CHECK_FALSE(s.get_bool("profile.search", true));
  CHECK(s.get_int("lattice.side", 64) == 64);
  CHECK(s.resolved().at("lattice.side") == "64");
  CHECK_NOTHROW(s.finish());
}

TEST_CASE("config errors carry line and key") {
  try {
    settings("model.mu = 2\nmodel.mu = 3\n");
    FAIL("duplicate accepted");
  } catch (const ConfigError& e) {
    CHECK(e.line == 2);
    CHECK(e.key == "model.mu");
  }
  CHECK_THROWS_AS(settings("model.mu 2\n"), ConfigError);
  CHECK_THROWS_AS(settings("bad key = 2\n"), ConfigError);
  Settings typo = settings("model.mu = 2\nmodle.R = 3\n");
  typo.get_double("model.mu", 0);
  try {
    typo.finish();
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(e.line == 2);
    CHECK(e.key == "modle.R");
  }
  Settings wrong = settings("model.R = twenty\n");
  CHECK_THROWS_AS(wrong.get_int("model.R", 1), ConfigError);
}

TEST_CASE("format_double keeps 17 significant digits") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(std::stod(format_double(theta(2.0))) == theta(2.0));
}

TEST_CASE("simulate: zero steps, determinism, one manifest") {
  const std::string cfg = "run.seed = 5\nmodel.R = 3\nlattice.side = 256\nsim.burn_in = 10\nsim.steps = 0\n";
  const fs::path a = scratch("sim-a");
  const fs::path b = scratch("sim-b");
  Settings sa = settings(cfg);
  Settings sb = settings(cfg);
  const RunManifest ma = run_command("simulate", sa, RunContext{a, 1});
  const RunManifest mb = run_command("simulate", sb, RunContext{b, 1});
  CHECK(ma.outputs.size() == 2);
  CHECK(ma.outputs.count("snapshot_0.barw") == 1);
  CHECK(ma.outputs == mb.outputs);
  CHECK(manifests_in(a) == 1);
  CHECK(slurp(a / "density.csv").find("t,time,occupied") == 0);

  Settings sc = settings(cfg);
  sc.set("run.seed", "6");
  const fs::path c = scratch("sim-c");
  CHECK(run_command("simulate", sc, RunContext{c, 1}).outputs != ma.outputs);

  const VerifyReport v = verify_directory(a, 1);
  CHECK(v.ok());
  std::ofstream(a / "density.csv", std::ios::app) << "tampered\n";
  CHECK_FALSE(verify_directory(a, 1).files_match);
  for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST_CASE("simulate: torus too small and unknown key are rejected") {
  Settings s = settings("model.R = 20\nlattice.side = 30\n");
  CHECK_THROWS_AS(cmd_simulate(s, RunContext{scratch("small"), 1}), TorusTooSmall);
  Settings t = settings("model.R = 2\nlattice.side = 30\nsim.stepz = 4\n");
  CHECK_THROWS_AS(cmd_simulate(t, RunContext{scratch("typo"), 1}), ConfigError);
}

TEST_CASE("certify: fixture passes, broken delta fails with a listing") {
  const fs::path ok = scratch("cert-ok");
  Settings s = settings("model.R = 32\nprofile.r = 8\n");
  const RunManifest m = run_command("certify", s, RunContext{ok, 1});
  CHECK(m.exit_code == kExitPass);
  const auto j = nlohmann::json::parse(slurp(ok / "certify.json"));
  CHECK(j.at("radii")[0].at("bernstein").contains("informative"));
  CHECK(j.at("radii")[0].at("bernstein").at("informative") == false);

  const fs::path bad = scratch("cert-bad");
  Settings b = settings("model.R = 32\nprofile.r = 8\nprofile.search = false\nprofile.s = 0.1\n"
                        "profile.w = 2\nprofile.eps0 = 0.025\nprofile.delta = 0.5\n");
  const RunManifest mb = run_command("certify", b, RunContext{bad, 1});
  CHECK(mb.exit_code == kExitFail);
  const auto jb = nlohmann::json::parse(slurp(bad / "certify.json"));
  CHECK(jb.at("radii")[0].at("report").at("violations").size() > 0);
  fs::remove_all(ok);
  fs::remove_all(bad);
}

TEST_CASE("block-probe: zero trials, reproducible field") {
  const std::string cfg = "model.R = 4\nmodel.d = 1\nscales.override.L_s = 12\n"
                          "scales.override.T_couple = 10\nprobe.burn_in = 20\n"
                          "probe.reference_burn_in = 20\nprobe.field_extent = 2\n";
  const fs::path a = scratch("probe-a");
  Settings s = settings(cfg + "probe.trials = 0\n");
  run_command("block-probe", s, RunContext{a, 1});
  const auto j = nlohmann::json::parse(slurp(a / "reports.json"));
  CHECK(j.at("trials").empty());
  CHECK(j.contains("caveat"));
  const fs::path b = scratch("probe-b");
  Settings t = settings(cfg + "probe.trials = 0\n");
  run_command("block-probe", t, RunContext{b, 1});
  CHECK(slurp(a / "gamma_field.csv") == slurp(b / "gamma_field.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("lineage: single path with no steps, speed-bound passthrough") {
  const fs::path a = scratch("lin-a");
  Settings s = settings("lineage.paths = 1\nlineage.K = 0\nlattice.side = 32\n");
  run_command("lineage", s, RunContext{a, 1});
  const std::string csv = slurp(a / "paths.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);  // header and k = 0

  const fs::path b = scratch("lin-b");
  Settings t = settings("model.d = 1\nlineage.paths = 20\nlineage.K = 16\nlattice.side = 64\n"
                        "lineage.burn_in = 20\nspeed.L_s = 128\nspeed.L_t = 16\n");
  run_command("lineage", t, RunContext{b, 2});
  const auto j = nlohmann::json::parse(slurp(b / "stats.json"));
  CHECK(j.contains("azuma_envelope"));
  CHECK(j.at("speed_bound").contains("p_a_mart"));
  CHECK(j.at("clt").contains("skipped"));
  fs::remove_all(a);
  fs::remove_all(b);
}
