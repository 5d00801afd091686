#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "parseq/experiments.hpp"

namespace fs = std::filesystem;
using parseq::json;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("parseq_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }
  fs::path write_config(const std::string& name, const json& j) { return write_config(name, j.dump(2)); }

  // Runs the CLI; stdout and stderr land in files under the temp dir.
  int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " '" + std::string(PARSEQ_CLI) + "' " + args + " >'" +
                            (dir_ / "stdout.txt").string() + "' 2>'" + (dir_ / "stderr.txt").string() + "'";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  std::string out() { return slurp(dir_ / "stdout.txt"); }
  std::string err() { return slurp(dir_ / "stderr.txt"); }

  fs::path dir_;
};

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

void expect_versioned(const std::vector<std::vector<std::string>>& rows, std::size_t min_rows) {
  ASSERT_GE(rows.size(), min_rows + 1);
  EXPECT_EQ(rows[0][0], "schema_version");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].size(), rows[0].size()) << "row " << i;
    EXPECT_EQ(rows[i][0], std::to_string(parseq::kCsvSchemaVersion));
  }
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  ADD_FAILURE() << "missing column " << name;
  return 0;
}

// Drops the wall_seconds column.
std::vector<std::vector<std::string>> without_timing(std::vector<std::vector<std::string>> rows) {
  const std::size_t c = column(rows.at(0), "wall_seconds");
  for (auto& r : rows) r.erase(r.begin() + static_cast<std::ptrdiff_t>(c));
  return rows;
}

json small_threshold() {
  return {{"experiment", "threshold"},
          {"system", {{"name", "mean_field_rnn"}, {"D", 6}}},
          {"grid", {{"g", {{"min", 0.5}, {"max", 2.5}, {"count", 3}}}, {"T", {20, 40}}, {"seeds", {0, 1}}}},
          {"solvers", {"deer", "quasi_deer", "gd"}},
          {"gd_step_sizes", {0.1, 0.5}},
          {"solver", {{"scan_mode", "sequential"}}}};
}

}  // namespace

// --- config errors ------------------------------------------------------------

TEST_F(Cli, MissingConfigFileIsConfigError) {
  EXPECT_EQ(run("rollout --config '" + (dir_ / "nope.json").string() + "'"), 3);
}

TEST_F(Cli, MissingConfigFlagIsConfigError) { EXPECT_EQ(run("rollout"), 3); }

TEST_F(Cli, MalformedJsonIsConfigError) {
  const auto p = write_config("bad.json", std::string("{\"experiment\": \"rollout\", "));
  EXPECT_EQ(run("rollout --config '" + p.string() + "'"), 3);
}

TEST_F(Cli, UnknownKeysAreConfigErrors) {
  json top = json::parse(slurp(std::string(PARSEQ_CONFIG_DIR) + "/rnn_rollout.json"));
  top["colour"] = "blue";
  EXPECT_EQ(run("rollout --config '" + write_config("a.json", top).string() + "'"), 3);
  EXPECT_NE(err().find("colour"), std::string::npos);

  json nested = json::parse(slurp(std::string(PARSEQ_CONFIG_DIR) + "/rnn_rollout.json"));
  nested["system"]["gain"] = 1.0;
  EXPECT_EQ(run("rollout --config '" + write_config("b.json", nested).string() + "'"), 3);

  json solver = small_threshold();
  solver["solver"]["tolerance"] = 1e-3;
  EXPECT_EQ(run("threshold --config '" + write_config("c.json", solver).string() + "'"), 3);
}

TEST_F(Cli, BadValuesAreConfigErrors) {
  json t = small_threshold();
  t["solver"]["tol"] = -1.0;
  EXPECT_EQ(run("threshold --config '" + write_config("a.json", t).string() + "'"), 3);
  t = small_threshold();
  t["solvers"] = {"newton"};
  EXPECT_EQ(run("threshold --config '" + write_config("b.json", t).string() + "'"), 3);
  t = small_threshold();
  t["grid"]["T"] = json::array();
  EXPECT_EQ(run("threshold --config '" + write_config("c.json", t).string() + "'"), 3);
  t = small_threshold();
  t["solver"]["init"] = "given";
  EXPECT_EQ(run("threshold --config '" + write_config("d.json", t).string() + "'"), 3);
}

TEST_F(Cli, ExperimentMustMatchSubcommand) {
  const std::string cfg = std::string(PARSEQ_CONFIG_DIR) + "/rnn_rollout.json";
  EXPECT_EQ(run("lle --config '" + cfg + "'"), 3);
}

// --- single-run subcommands ---------------------------------------------------------

TEST_F(Cli, RolloutReproducesGoldenFile) {
  const fs::path out = dir_ / "traj.csv";
  ASSERT_EQ(run("rollout --config '" + std::string(PARSEQ_CONFIG_DIR) + "/rnn_rollout.json' --out '" +
                out.string() + "'"),
            0);
  EXPECT_EQ(slurp(out), slurp(std::string(PARSEQ_TEST_DATA) + "/rnn_g0.8_D20_T1000_seed0.csv"));
}

TEST_F(Cli, SolveReportsConvergence) {
  ASSERT_EQ(run("solve --config '" + std::string(PARSEQ_CONFIG_DIR) + "/rnn_solve.json'"), 0);
  const json r = json::parse(out());
  EXPECT_TRUE(r["converged"].get<bool>());
  EXPECT_LE(r["iterations"].get<int>(), 15);
  EXPECT_EQ(r["method"], "deer");
  EXPECT_EQ(r["merit_history"].size(), r["iterations"].get<std::size_t>() + 1);
}

TEST_F(Cli, LleOfLogisticMap) {
  const json cfg = {{"experiment", "lle"}, {"system", {{"name", "logistic"}, {"r", 4.0}}}, {"T", 20000}, {"seed", 0}};
  const fs::path out = dir_ / "lle.json";
  ASSERT_EQ(run("lle --config '" + write_config("lle.json", cfg).string() + "' --out '" + out.string() + "'"), 0);
  const json r = json::parse(slurp(out));
  EXPECT_NEAR(r["lambda"].get<double>(), std::log(2.0), 0.02);
  EXPECT_EQ(r["per_vector"].size(), 3u);
}

TEST_F(Cli, BoundsPrintsVerdict) {
  const std::regex line(R"(parallelizable: (yes|no) \(lambda=[-0-9.e+]+, predicted_steps=[-0-9.e+inf]+\))");
  json cfg = {{"experiment", "bounds"},
              {"system", {{"name", "mean_field_rnn"}, {"D", 8}, {"g", 0.6}}},
              {"T", 100},
              {"seed", 0},
              {"lipschitz_samples", 200}};
  ASSERT_EQ(run("bounds --config '" + write_config("a.json", cfg).string() + "' --out '" +
                (dir_ / "b.json").string() + "'"),
            0);
  EXPECT_TRUE(std::regex_search(out(), line)) << out();
  EXPECT_NE(out().find("parallelizable: yes"), std::string::npos);
  const json r = json::parse(slurp(dir_ / "b.json"));
  EXPECT_LT(r["lle"].get<double>(), 0.0);

  cfg["system"]["g"] = 3.0;
  cfg["system"]["D"] = 40;
  ASSERT_EQ(run("bounds --config '" + write_config("b.json", cfg).string() + "'"), 0);
  EXPECT_NE(out().find("parallelizable: no"), std::string::npos) << out();
}

// --- sweeps -------------------------------------------------------------------------

TEST_F(Cli, ThresholdIsVersionedAndDeterministic) {
  const auto cfg = write_config("t.json", small_threshold());
  const fs::path a = dir_ / "a.csv", b = dir_ / "b.csv";
  ASSERT_EQ(run("threshold --config '" + cfg.string() + "' --out '" + a.string() + "' --workers 1"), 0);
  ASSERT_EQ(run("threshold --config '" + cfg.string() + "' --out '" + b.string() + "' --workers 3"), 0);
  const auto rows = read_csv(a);
  // 3 g x 2 T x 2 seeds x 3 solvers.
  expect_versioned(rows, 36);
  EXPECT_EQ(rows.size(), 37u);
  EXPECT_EQ(without_timing(rows), without_timing(read_csv(b)));
  const auto& h = rows[0];
  for (const char* name : {"g", "lambda", "T", "seed", "solver", "steps", "converged", "final_merit", "nan_resets"})
    column(h, name);
}

TEST_F(Cli, WorkersFromEnvironment) {
  const auto cfg = write_config("t.json", small_threshold());
  const fs::path a = dir_ / "a.csv", b = dir_ / "b.csv";
  ASSERT_EQ(run("threshold --config '" + cfg.string() + "' --out '" + a.string() + "'", "PARSEQ_WORKERS=2"), 0);
  ASSERT_EQ(run("threshold --config '" + cfg.string() + "' --out '" + b.string() + "'"), 0);
  EXPECT_EQ(without_timing(read_csv(a)), without_timing(read_csv(b)));
}

TEST_F(Cli, TwowellWritesStepsAndLleFiles) {
  json cfg = json::parse(slurp(std::string(PARSEQ_CONFIG_DIR) + "/twowell.json"));
  cfg["grid"] = {{"T", {50, 200}}, {"seeds", {{"count", 3}}}};
  const fs::path out = dir_ / "tw.csv";
  ASSERT_EQ(run("twowell --config '" + write_config("tw.json", cfg).string() + "' --out '" + out.string() + "'"), 0);
  const auto rows = read_csv(out);
  expect_versioned(rows, 6);
  EXPECT_EQ(rows.size(), 7u);
  const auto conv = column(rows[0], "converged");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i][conv], "true");
  const auto lle = read_csv(dir_ / "tw_lle.csv");
  expect_versioned(lle, 6);
  EXPECT_EQ(lle[0], (std::vector<std::string>{"schema_version", "T", "seed", "iteration", "lle"}));
}

TEST_F(Cli, ObserverRowsPerFlowAndMode) {
  json cfg = json::parse(slurp(std::string(PARSEQ_CONFIG_DIR) + "/observer.json"));
  cfg["T"] = 2000;
  cfg["system_max_iters"] = 20;
  const fs::path out = dir_ / "obs.csv";
  ASSERT_EQ(run("observer --config '" + write_config("o.json", cfg).string() + "' --out '" + out.string() + "'"), 0);
  const auto rows = read_csv(out);
  expect_versioned(rows, 4);
  ASSERT_EQ(rows.size(), 5u);
  const auto flow = column(rows[0], "flow"), mode = column(rows[0], "mode"), lambda = column(rows[0], "lambda");
  EXPECT_EQ(rows[1][flow], "lorenz");
  EXPECT_EQ(rows[1][mode], "system");
  EXPECT_EQ(rows[2][mode], "observer");
  EXPECT_EQ(rows[3][flow], "rossler");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double l = std::stod(rows[i][lambda]);
    if (rows[i][mode] == "system")
      EXPECT_GT(l, 0.0) << rows[i][flow];
    else
      EXPECT_LT(l, 0.0) << rows[i][flow];
  }
}

TEST_F(Cli, OracleCheckSmall) {
  const json cfg = {{"experiment", "oracle-check"}, {"sandwich_systems", 10}, {"neumann_systems", 10},
                    {"perturbation_systems", 5},    {"linear_systems", 5},    {"scan_cases", 6},
                    {"gradient_systems", 5},        {"basin_systems", 2},     {"seed", 3}};
  const fs::path out = dir_ / "oracle.json";
  ASSERT_EQ(run("oracle-check --config '" + write_config("o.json", cfg).string() + "' --out '" + out.string() + "'"), 0);
  const json r = json::parse(slurp(out));
  EXPECT_TRUE(r["passed"].get<bool>());
  EXPECT_EQ(r["suites"].size(), 7u);
  for (const auto& s : r["suites"]) EXPECT_TRUE(s["passed"].get<bool>()) << s["name"];
  EXPECT_NE(err().find("PASS"), std::string::npos);
}
