#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "diffcbf/config_io.hpp"

namespace fs = std::filesystem;
using namespace diffcbf;

namespace {

const std::string kRoot = DIFFCBF_SOURCE_DIR;

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("diffcbf_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

int count_fields(const std::string& line) {
  return static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
}

const char* kSmallScenario = R"(name: small
robot:
  type: unicycle
  initial_state: [0, 0, 0]
  bodies:
    - {name: disc, shape: {type: sphere, radius: 0.2}}
controller: {type: proportional, target: [1.0, 0.0]}
obstacles:
  - {name: a, shape: {type: sphere, radius: 0.2}, pose: {position: [0.5, 1.0]}}
  - {name: b, shape: {type: box, half_extents: [0.1, 0.1]}, pose: {position: [0.5, -1.0]}}
timing: {horizon: 0.3}
)";

}  // namespace

TEST(Config, LineAnchoredErrors) {
  const std::string bad = "name: x\nrobot:\n  type: unicycle\n  initial_state: [0, 0, 0]\n"
                          "  bodies:\n    - {name: d, shape: {type: sphere, radius: -1}}\n"
                          "controller: {type: proportional, target: [1, 0]}\n";
  try {
    parse_scenario(bad, "bad.yaml");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 6);
    EXPECT_NE(std::string(e.what()).find("bad.yaml:6"), std::string::npos) << e.what();
  }
  try {
    parse_scenario(std::string(kSmallScenario) + "colour: red\n", "extra.yaml");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
    EXPECT_EQ(e.line(), 12);
  }
  EXPECT_THROW(parse_scenario("name: [unterminated\n"), ConfigError);
}

TEST(Config, JsonAccepted) {
  const std::string js = R"({"robot": {"type": "unicycle", "initial_state": [0, 0, 0],
    "bodies": [{"name": "d", "shape": {"type": "sphere", "radius": 0.2}}]},
    "controller": {"type": "proportional", "target": [1, 1]},
    "obstacles": [], "cbf": {"beta": 1.1, "gamma": 2.0}})";
  const auto cfg = parse_scenario(js);
  EXPECT_DOUBLE_EQ(cfg.cbf.beta, 1.1);
  EXPECT_DOUBLE_EQ(cfg.cbf.gamma, 2.0);
}

TEST(Config, Defaults) {
  const auto cfg = parse_scenario(kSmallScenario);
  EXPECT_DOUBLE_EQ(cfg.cbf.beta, 1.03);
  EXPECT_DOUBLE_EQ(cfg.cbf.gamma, 5.0);
  EXPECT_DOUBLE_EQ(cfg.timing.dt_sim, 1e-3);
  EXPECT_DOUBLE_EQ(cfg.timing.dt_ctrl, 1e-2);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"simulate"}).code, 2);
  EXPECT_EQ(run({"simulate", "/nonexistent/file.yaml"}).code, 2);
  EXPECT_EQ(run({"collide", kRoot + "/scenarios/sphere_pair.yaml", "--grad", "magic"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, CollideSpherePair) {
  const auto r = run({"collide", kRoot + "/scenarios/sphere_pair.yaml"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["alpha_star"].get<double>(), 2.0, 1e-9);
  const auto jac = j["jacobian"]["full"].get<std::vector<double>>();
  ASSERT_EQ(jac.size(), 14u);
  EXPECT_NEAR(jac[0], -0.5, 1e-9);
  EXPECT_NEAR(jac[1], 0.0, 1e-9);
  EXPECT_NEAR(jac[2], 0.0, 1e-9);
}

TEST(Cli, GradcheckExitCodes) {
  EXPECT_EQ(run({"gradcheck", "--seeds", "5"}).code, 0);
  // An impossible tolerance turns into a check failure.
  EXPECT_EQ(run({"gradcheck", "--seeds", "5", "--method-tol", "1e-300"}).code, 1);
}

TEST(Cli, Bench) {
  const auto r = run({"bench", "--pairs", "20", "--dim", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("p50"), std::string::npos);
}

TEST(Cli, SimulateWritesOutputs) {
  const fs::path dir = scratch("sim");
  const fs::path file = dir / "small.yaml";
  write(file, kSmallScenario);
  const auto r = run({"simulate", file.string(), "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path csv = dir / "out" / "trajectory.csv";
  ASSERT_TRUE(fs::exists(csv));
  ASSERT_TRUE(fs::exists(dir / "out" / "summary.json"));
  const std::string header = first_line(csv);
  EXPECT_EQ(header.rfind("t,x0,x1,x2,", 0), 0u) << header;
  EXPECT_NE(header.find("h_0_0"), std::string::npos);
  EXPECT_NE(header.find("h_0_1"), std::string::npos);

  // Adding an obstacle adds exactly one barrier column (and its gradient column).
  std::string more = kSmallScenario;
  more.replace(more.find("timing:"), 0,
               "  - {name: c, shape: {type: sphere, radius: 0.1}, pose: {position: [3, 3]}}\n");
  write(file, more);
  ASSERT_EQ(run({"simulate", file.string(), "--out", (dir / "out2").string()}).code, 0);
  EXPECT_EQ(count_fields(first_line(dir / "out2" / "trajectory.csv")), count_fields(header) + 2);

  std::ifstream js(dir / "out" / "summary.json");
  const auto summary = nlohmann::json::parse(js);
  for (const char* key : {"reached", "min_h", "steps", "qp_failures", "outputs", "timing"})
    EXPECT_TRUE(summary.contains(key)) << key;
  EXPECT_EQ(summary["steps"].get<int>(), 30);
}

TEST(Cli, SimulateUsesEnvironmentOutputDir) {
  const fs::path dir = scratch("env");
  write(dir / "small.yaml", kSmallScenario);
  setenv(cli::kOutDirEnv, (dir / "from_env").string().c_str(), 1);
  const auto r = run({"simulate", (dir / "small.yaml").string()});
  unsetenv(cli::kOutDirEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "from_env" / "trajectory.csv"));
}

TEST(Cli, SimulateConfigErrorIsExitTwo) {
  const fs::path dir = scratch("bad");
  write(dir / "bad.yaml", "robot: {type: hovercraft}\n");
  const auto r = run({"simulate", (dir / "bad.yaml").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad.yaml:1"), std::string::npos) << r.err;
}
