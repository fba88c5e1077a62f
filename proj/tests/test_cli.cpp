#include "test_util.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

namespace fs = std::filesystem;
using testutil::TempDir;

namespace {

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + ISSRC_CLI_PATH + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(testutil::slurp(p)); }

struct Fixture {
  TempDir dir;
  std::string data, labels;
  Fixture() {
    const auto ds = testutil::separable_fixture(60, 12, 8);
    data = dir.file("data.csv");
    labels = dir.file("labels.csv");
    issrc::save_dataset(ds, data, labels);
  }
  std::string io(const std::string& out) const {
    return "--data " + data + " --labels " + labels + " --out " + dir.file(out);
  }
};

const std::string kSmall = " --pre-count 20 --final-count 6 --ranks 5,3";

}  // namespace

TEST(Cli, SelectGenesWritesScoresAndCurves) {
  Fixture f;
  ASSERT_EQ(run_cli("select-genes " + f.io("sel") + " --pre-count 20 --final-count 6"), 0);
  const fs::path out = f.dir.path() / "sel";
  EXPECT_TRUE(fs::exists(out / "gene_scores.csv"));
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
  const auto m = read_json(out / "manifest.json");
  EXPECT_EQ(m["command"], "select-genes");
  std::size_t curves = 0;
  for (const auto& e : fs::directory_iterator(out))
    if (e.path().filename().string().rfind("dca_", 0) == 0) ++curves;
  EXPECT_EQ(curves, 6u);
}

TEST(Cli, CrossValidateOutputs) {
  Fixture f;
  ASSERT_EQ(run_cli("cross-validate " + f.io("cv") + kSmall + " --folds 3"), 0);
  const fs::path out = f.dir.path() / "cv";
  for (const char* name : {"metrics.json", "predictions.csv", "roc.csv", "dca_classifier.csv", "pca3.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(out / name)) << name;
  const auto metrics = read_json(out / "metrics.json");
  EXPECT_TRUE(metrics.contains("pooled"));
}

TEST(Cli, AblationFlagsRun) {
  Fixture f;
  EXPECT_EQ(run_cli("cross-validate " + f.io("ab") + kSmall + " --folds 3 --skip-features --skip-selection"), 0);
}

TEST(Cli, SeedPrecedence) {
  Fixture f;
  ASSERT_EQ(run_cli("cross-validate " + f.io("env") + kSmall + " --folds 3", "ISSRC_SEED=5"), 0);
  auto m = read_json(f.dir.path() / "env" / "manifest.json");
  EXPECT_EQ(m["seed"], 5);
  EXPECT_EQ(m["seed_source"], "ISSRC_SEED");
  ASSERT_EQ(run_cli("cross-validate " + f.io("flag") + kSmall + " --folds 3 --seed 9", "ISSRC_SEED=5"), 0);
  m = read_json(f.dir.path() / "flag" / "manifest.json");
  EXPECT_EQ(m["seed"], 9);
  EXPECT_EQ(m["seed_source"], "flag");
}

TEST(Cli, ConfigViolationExitsTwo) {
  Fixture f;
  const auto cfg = f.dir.write("bad.cfg", "rho = 2.5\n");
  EXPECT_EQ(run_cli("cross-validate " + f.io("bad") + " --config " + cfg), 2);
  const auto err = read_json(f.dir.path() / "bad" / "error.json");
  EXPECT_NE(err.dump().find("rho must lie in (0,2)"), std::string::npos);
}

TEST(Cli, MissingInputExitsOne) {
  TempDir dir;
  EXPECT_EQ(run_cli("select-genes --data " + dir.file("nope.csv") + " --labels " + dir.file("nope2.csv") + " --out " +
                    dir.file("o")),
            1);
  EXPECT_TRUE(fs::exists(dir.path() / "o" / "error.json"));
}

TEST(Cli, BenchAndStability) {
  TempDir dir;
  ASSERT_EQ(run_cli("bench-solver --instances 3 --rho 0.5,1.5 --out " + dir.file("b")), 0);
  EXPECT_TRUE(fs::exists(dir.path() / "b" / "solver_bench.csv"));
  ASSERT_EQ(run_cli("stability-test --trials 20 --out " + dir.file("s")), 0);
  EXPECT_TRUE(fs::exists(dir.path() / "s" / "stability.csv"));
  EXPECT_EQ(run_cli("bench-solver --rho 2.5 --out " + dir.file("r")), 2);
}
