#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "slcd/config.hpp"
#include "slcd/dataset.hpp"
#include "testutil.hpp"

using namespace slcd;

namespace {

struct CmdResult {
  int code = -1;
  std::string output;  // stdout and stderr combined
};

const std::string& cli_path() {
  static const std::string p = [] {
#ifdef SLCD_CLI_PATH
    return std::string(SLCD_CLI_PATH);
#else
    const char* env = std::getenv("SLCD_CLI_PATH");
    return env ? std::string(env) : std::string();
#endif
  }();
  return p;
}

CmdResult run_cli(const testutil::TempDir& dir, const std::string& args,
                  const std::string& env_prefix = "") {
  static int counter = 0;
  std::string capture = dir.sub("cli_out_" + std::to_string(counter++) + ".txt");
  std::string cmd = env_prefix + "\"" + cli_path() + "\" " + args + " >\"" +
                    capture + "\" 2>&1";
  int rc = std::system(cmd.c_str());
  CmdResult res;
  if (WIFEXITED(rc)) res.code = WEXITSTATUS(rc);
  std::ifstream f(capture);
  res.output.assign((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return res;
}

}  // namespace

TEST(Cli, BinaryIsConfigured) {
  ASSERT_FALSE(cli_path().empty())
      << "SLCD_CLI_PATH must point at the command line binary";
  ASSERT_TRUE(std::filesystem::exists(cli_path()));
}

TEST(Cli, NoSubcommandIsAUsageError) {
  testutil::TempDir dir("cli0");
  CmdResult r = run_cli(dir, "");
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, HelpExitsCleanly) {
  testutil::TempDir dir("clihelp");
  CmdResult r = run_cli(dir, "--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("make-data"), std::string::npos);
  EXPECT_NE(r.output.find("translate"), std::string::npos);
  EXPECT_NE(r.output.find("evaluate"), std::string::npos);
}

TEST(Cli, MakeDataWritesDataset) {
  testutil::TempDir dir("climk");
  std::string out = dir.sub("d");
  CmdResult r = run_cli(dir, "make-data --domain sim --n 6 --seed 3 --out \"" +
                                 out + "\"");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("wrote 6 sim samples"), std::string::npos);
  EXPECT_EQ(load_dataset(out).size(), 6u);

  // refuses to clobber without --force, succeeds with it
  CmdResult again = run_cli(dir, "make-data --domain sim --n 6 --seed 3 --out \"" + out + "\"");
  EXPECT_EQ(again.code, 2);
  EXPECT_NE(again.output.find("force"), std::string::npos);
  CmdResult forced = run_cli(
      dir, "make-data --domain real --n 4 --seed 3 --force --out \"" + out + "\"");
  EXPECT_EQ(forced.code, 0) << forced.output;
  EXPECT_EQ(load_dataset(out).size(), 4u);
}

TEST(Cli, MakeDataUsageErrors) {
  testutil::TempDir dir("climkbad");
  // no --out anywhere
  CmdResult r = run_cli(dir, "make-data --domain sim --n 3");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("--out required"), std::string::npos);

  // bad flag values are caught during parsing
  EXPECT_EQ(run_cli(dir, "make-data --domain mars --n 3 --out \"" + dir.sub("x") + "\"").code, 1);
  EXPECT_EQ(run_cli(dir, "make-data --domain sim --n 0 --out \"" + dir.sub("x") + "\"").code, 1);
  EXPECT_EQ(run_cli(dir, "make-data --domain sim --n 3 --bogus 1 --out \"" + dir.sub("x") + "\"").code, 1);
}

TEST(Cli, OutRootSuppliesDefaultPaths) {
  testutil::TempDir dir("cliroot");
  std::string root = dir.sub("runs");
  std::filesystem::create_directories(root);
  CmdResult r = run_cli(dir, "make-data --domain sim --n 5 --seed 4",
                        "SLCD_OUT_ROOT=\"" + root + "\" ");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(load_dataset(root + "/data_sim").size(), 5u);
}

TEST(Cli, TrainAeWritesCheckpointAndRunRecord) {
  testutil::TempDir dir("clitrain");
  std::string data = dir.sub("d");
  ASSERT_EQ(run_cli(dir, "make-data --domain sim --n 70 --seed 5 --out \"" + data + "\"").code, 0);

  std::string cfg = dir.sub("tiny.cfg");
  {
    std::ofstream f(cfg);
    f << "ae_latent_dim=4\nae_hidden=16\nae_epochs=3\nae_target=1.0\n";
  }
  std::string ckpt = dir.sub("ae.ckpt");
  CmdResult r = run_cli(dir, "train --stage ae --data \"" + data +
                                 "\" --out \"" + ckpt + "\" --seed 2 --config \"" + cfg + "\"");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("digest"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(ckpt));
  EXPECT_TRUE(std::filesystem::exists(ckpt + ".log"));
}

TEST(Cli, MissingStageDependenciesAreRuntimeErrors) {
  testutil::TempDir dir("clidep");
  std::string data = dir.sub("d");
  ASSERT_EQ(run_cli(dir, "make-data --domain sim --n 5 --seed 5 --out \"" + data + "\"").code, 0);

  CmdResult distill = run_cli(dir, "train --stage distill --data \"" + data +
                                       "\" --out \"" + dir.sub("cm.ckpt") + "\"");
  EXPECT_EQ(distill.code, 2);
  EXPECT_NE(distill.output.find("teacher"), std::string::npos);

  CmdResult teacher = run_cli(dir, "train --stage teacher --data \"" + data +
                                       "\" --out \"" + dir.sub("t.ckpt") + "\"");
  EXPECT_EQ(teacher.code, 2);
  EXPECT_NE(teacher.output.find("codec"), std::string::npos);

  // unknown stage never reaches the runtime layer
  EXPECT_EQ(run_cli(dir, "train --stage warp --data \"" + data +
                             "\" --out \"" + dir.sub("w.ckpt") + "\"").code, 1);
}

TEST(Cli, TranslateArgumentChecks) {
  testutil::TempDir dir("clitl");
  std::string data = dir.sub("d");
  ASSERT_EQ(run_cli(dir, "make-data --domain sim --n 3 --seed 6 --out \"" + data + "\"").code, 0);

  // CLI-level range check
  CmdResult bad_strength = run_cli(
      dir, "translate --model \"" + dir.sub("m.ckpt") + "\" --input \"" + data +
               "\" --out \"" + dir.sub("o") + "\" --strength 1.5");
  EXPECT_EQ(bad_strength.code, 1);

  // missing model surfaces as a runtime failure
  CmdResult absent = run_cli(
      dir, "translate --model \"" + dir.sub("m.ckpt") + "\" --input \"" + data +
               "\" --out \"" + dir.sub("o") + "\" --strength 0.5");
  EXPECT_EQ(absent.code, 2);
  EXPECT_NE(absent.output.find("cannot open"), std::string::npos);

  // --out must come from the flag or the environment
  CmdResult no_out = run_cli(dir, "translate --model \"" + dir.sub("m.ckpt") +
                                      "\" --input \"" + data + "\"");
  EXPECT_EQ(no_out.code, 1);
  EXPECT_NE(no_out.output.find("--out required"), std::string::npos);
}

TEST(Cli, EvaluateIdenticalDirsGiveNullMetrics) {
  testutil::TempDir dir("clieval");
  std::string data = dir.sub("d");
  ASSERT_EQ(run_cli(dir, "make-data --domain sim --n 40 --seed 8 --out \"" + data + "\"").code, 0);

  std::string csv = dir.sub("metrics.csv");
  CmdResult r = run_cli(dir, "evaluate --real \"" + data + "\" --gen \"" + data +
                                 "\" --metrics dc,mmd,fd --out \"" + csv + "\"");
  EXPECT_EQ(r.code, 0) << r.output;

  std::vector<MetricRow> rows = read_metrics_csv(csv);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].metric, "density");
  EXPECT_GE(rows[0].value, 1.0);
  EXPECT_EQ(rows[1].metric, "coverage");
  EXPECT_DOUBLE_EQ(rows[1].value, 1.0);
  EXPECT_EQ(rows[2].metric, "mmd2");
  EXPECT_NEAR(rows[2].value, 0.0, 1e-12);
  EXPECT_EQ(rows[3].metric, "fd");
  EXPECT_NEAR(rows[3].value, 0.0, 1e-9);
}

TEST(Cli, EvaluateRejectsUnknownMetricTag) {
  testutil::TempDir dir("clievalbad");
  std::string data = dir.sub("d");
  ASSERT_EQ(run_cli(dir, "make-data --domain sim --n 5 --seed 9 --out \"" + data + "\"").code, 0);
  CmdResult r = run_cli(dir, "evaluate --real \"" + data + "\" --gen \"" + data +
                                 "\" --metrics dc,bogus --out \"" + dir.sub("m.csv") + "\"");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("unknown metric tag"), std::string::npos);
}
