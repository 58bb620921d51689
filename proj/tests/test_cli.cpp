#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <string>

#include "influence/csv_io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string(INFLUENCE_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = influence::read_text_file(out);
  r.err = influence::read_text_file(err);
  fs::remove(out);
  fs::remove(err);
  return r;
}

// One line: "error: <category>: <message>".
std::string error_category(const Run& r) {
  static const std::regex line(R"(^error: ([a-z_]+): [^\n]*\n$)");
  std::smatch m;
  return std::regex_match(r.err, m, line) ? m[1].str() : "malformed: " + r.err;
}

}  // namespace

TEST(Cli, SimulateSucceedsAndListsFiles) {
  const auto dir = influence::testing::temp_dir();
  const auto r = cli("simulate --out " + (dir / "o").string() + " --seed 5 --set sim.duration_s=60", dir);
  EXPECT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("wrote "), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "o" / "sim_1.csv"));
  EXPECT_TRUE(fs::exists(dir / "o" / "sim_1_truth.csv"));
}

TEST(Cli, SameSeedSameBytes) {
  const auto dir = influence::testing::temp_dir();
  for (const char* sub : {"a", "b"}) {
    ASSERT_EQ(cli(std::string("simulate --seed 9 --set sim.duration_s=60 --out ") + (dir / sub).string(), dir).status, 0);
  }
  EXPECT_EQ(influence::read_text_file(dir / "a" / "sim_1.csv"), influence::read_text_file(dir / "b" / "sim_1.csv"));
}

TEST(Cli, ConfigFileThenOverrides) {
  const auto dir = influence::testing::temp_dir();
  std::ofstream(dir / "p.conf") << "sim.duration_s = 30\nsim.count = 2\nsim.name = run\n";
  const auto r = cli("simulate --config " + (dir / "p.conf").string() + " --set sim.count=3 --out " +
                         (dir / "o").string(),
                     dir);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "o" / "run_3.csv"));
  EXPECT_EQ(influence::read_csv(dir / "o" / "run_1.csv").rows.size(), 300u);
}

TEST(Cli, ZeroDurationIsInvalidArgument) {
  const auto dir = influence::testing::temp_dir();
  const auto r = cli("simulate --out " + dir.string() + " --set sim.duration_s=0", dir);
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(error_category(r), "invalid_argument");
}

TEST(Cli, UnknownConfigKey) {
  const auto dir = influence::testing::temp_dir();
  std::ofstream(dir / "p.conf") << "train.speed = 3\n";
  const auto r = cli("train --config " + (dir / "p.conf").string(), dir);
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(error_category(r), "invalid_argument");
}

TEST(Cli, MissingConfigFile) {
  const auto dir = influence::testing::temp_dir();
  const auto r = cli("report --config " + (dir / "nope.conf").string(), dir);
  EXPECT_EQ(error_category(r), "file_not_found");
}

TEST(Cli, MissingInputIsFileNotFound) {
  const auto dir = influence::testing::temp_dir();
  const auto r = cli("train --out " + dir.string(), dir);
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(error_category(r), "file_not_found");
  EXPECT_NE(r.err.find("sim_1.csv"), std::string::npos);
}

TEST(Cli, CorruptCheckpointWritesNothing) {
  const auto dir = influence::testing::temp_dir();
  ASSERT_EQ(cli("simulate --set sim.duration_s=60 --out " + dir.string(), dir).status, 0);
  std::ofstream(dir / "model.json") << "{\"format\": \"influence-gaussian-mlp\", \"layers\": [";
  const auto r = cli("analyze --out " + dir.string(), dir);
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(error_category(r), "checkpoint_parse_error");
  EXPECT_FALSE(fs::exists(dir / "sim_1_te.csv"));
  EXPECT_FALSE(fs::exists(dir / "sim_1_peaks.csv"));
}

TEST(Cli, KAboveSequenceCountIsInvalidArgument) {
  const auto dir = influence::testing::temp_dir();
  ASSERT_EQ(cli("simulate --set sim.duration_s=60 --out " + dir.string(), dir).status, 0);
  std::ofstream(dir / "sim_1_peaks.csv") << "anchor_t,te_value,window_start_t,window_end_t\n"
                                            "100,0.4,81,95\n"
                                            "300,0.2,281,295\n";
  const auto r = cli("cluster --set cluster.k=3 --out " + dir.string(), dir);
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(error_category(r), "invalid_argument");
  EXPECT_FALSE(fs::exists(dir / "clusters.csv"));
}

TEST(Cli, UsageErrorsExitTwo) {
  const auto dir = influence::testing::temp_dir();
  auto r = cli("frobnicate", dir);
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(error_category(r), "usage");
  r = cli("train --seed banana", dir);
  EXPECT_EQ(r.status, 2);
  EXPECT_EQ(error_category(r), "usage");
  r = cli("", dir);
  EXPECT_EQ(r.status, 2);
}
