// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "run_report.hpp"

namespace a2fpn::cli {
namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("a2fpn_cli_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "a2fpn");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    log_.str("");
    err_.str("");
    return run(static_cast<int>(argv.size()), argv.data(), log_, err_);
  }

  std::string out(const std::string& name) const { return (dir_ / name).string(); }

  static nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
  }

  static std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir_;
  std::ostringstream log_;
  std::ostringstream err_;
};

TEST(RunReport, DigestIsSha256OfCompactDump) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(config_digest(nlohmann::json{{"b", 1}, {"a", 2}}), sha256_hex(R"({"a":2,"b":1})"));
}

TEST_F(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(invoke({}), kExitUsage); }

TEST_F(Cli, HelpSucceeds) { EXPECT_EQ(invoke({"--help"}), kExitOk); }

TEST_F(Cli, CountDiffPrintsDelta) {
  EXPECT_EQ(invoke({"count", "--arch", "pafpn", "--diff", "fpn", "--out", out("count")}), kExitOk);
  EXPECT_NE(log_.str().find("3540480"), std::string::npos) << log_.str();
  const auto report = read_json(dir_ / "count" / "run_report.json");
  EXPECT_EQ(report.at("command"), "count");
  EXPECT_EQ(report.at("outcome"), "pass");
  EXPECT_TRUE(fs::exists(dir_ / "count" / "complexity.json"));
}

TEST_F(Cli, CountRejectsBadArguments) {
  EXPECT_EQ(invoke({"count", "--arch", "bifpn", "--out", out("a")}), kExitUsage);
  EXPECT_EQ(invoke({"count", "--image-size", "1280", "--out", out("b")}), kExitUsage);
  EXPECT_EQ(invoke({"count", "--image-size", "1280x800", "--out", out("c")}), kExitFailure);
  EXPECT_EQ(invoke({"count", "--bogus"}), kExitUsage);
}

TEST_F(Cli, ForwardIsDeterministic) {
  const std::vector<std::string> base = {"forward", "--arch", "a2fpn_lite", "--config",
                                         "", "--random", "64x128", "--seed", "4"};
  const fs::path cfg = dir_ / "toy.json";
  std::ofstream(cfg) << R"({"preset": "toy", "arch": "a2fpn_lite"})";
  auto args = base;
  args[4] = cfg.string();
  args.insert(args.end(), {"--out", out("f1")});
  ASSERT_EQ(invoke(args), kExitOk) << err_.str();
  args.back() = out("f2");
  ASSERT_EQ(invoke(args), kExitOk) << err_.str();
  const auto manifest = read_json(dir_ / "f1" / "manifest.json");
  EXPECT_EQ(manifest.at("levels").size(), 5u);
  for (int level = 2; level <= 6; ++level) {
    const std::string name = "level" + std::to_string(level) + ".a2tsr";
    ASSERT_TRUE(fs::exists(dir_ / "f1" / name)) << name;
    EXPECT_EQ(read_bytes(dir_ / "f1" / name), read_bytes(dir_ / "f2" / name)) << name;
  }
}

TEST_F(Cli, ForwardRejectsBadInput) {
  EXPECT_EQ(invoke({"forward", "--random", "100x64", "--out", out("a")}), kExitFailure);
  EXPECT_EQ(invoke({"forward", "--out", out("b")}), kExitUsage);
  EXPECT_EQ(invoke({"forward", "--random", "64x64", "--input", "x.a2tsr", "--out", out("c")}),
            kExitUsage);
  const auto report = read_json(dir_ / "a" / "run_report.json");
  EXPECT_EQ(report.at("outcome"), "error");
}

TEST_F(Cli, TrainWithoutProgressFails) {
  EXPECT_EQ(invoke({"train-toy", "--arch", "fpn", "--steps", "2", "--images", "1", "--lr", "0",
                    "--out", out("t")}),
            kExitFailure);
  std::ifstream csv(dir_ / "t" / "loss.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "step,loss,reg_loss");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST_F(Cli, GradcheckConfigErrors) {
  EXPECT_EQ(invoke({"gradcheck", out("missing.json"), "--out", out("g0")}), kExitUsage);
  const fs::path unknown = dir_ / "unknown.json";
  std::ofstream(unknown) << R"({"ops": ["no_such_op"]})";
  EXPECT_EQ(invoke({"gradcheck", unknown.string(), "--out", out("g1")}), kExitUsage);
  const fs::path extra = dir_ / "extra.json";
  std::ofstream(extra) << R"({"ops": "all", "steps": 3})";
  EXPECT_EQ(invoke({"gradcheck", extra.string(), "--out", out("g2")}), kExitUsage);
}

TEST_F(Cli, GradcheckToleranceDecidesExitCode) {
  const fs::path cfg = dir_ / "small.json";
  std::ofstream(cfg) << R"({"ops": ["sigmoid", "softmax_rows"], "seed": 1})";
  EXPECT_EQ(invoke({"gradcheck", cfg.string(), "--out", out("pass")}), kExitOk) << log_.str();
  EXPECT_EQ(invoke({"gradcheck", cfg.string(), "--tol", "0", "--out", out("fail")}), kExitFailure);
  const auto results = read_json(dir_ / "pass" / "gradcheck.json");
  EXPECT_TRUE(results.at("pass").get<bool>());
}

TEST_F(Cli, OracleWritesReport) {
  EXPECT_EQ(invoke({"oracle", "--cases", "2", "--out", out("o")}), kExitOk);
  EXPECT_TRUE(read_json(dir_ / "o" / "oracle.json").at("pass").get<bool>());
}

}  // namespace
}  // namespace a2fpn::cli
