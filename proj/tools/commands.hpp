// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace a2fpn::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // a check or numeric criterion failed
inline constexpr int kExitUsage = 2;    // bad flags or config

struct GradcheckArgs {
  std::filesystem::path config;  // {"ops": "all" | [names], "eps", "tol", "seed"}
  std::optional<double> tol;
  std::optional<double> eps;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "a2fpn-out/gradcheck";
};

struct OracleArgs {
  std::uint64_t seed = 0;
  std::size_t cases = 50;
  double tol = 1e-12;
  std::filesystem::path out = "a2fpn-out/oracle";
};

struct ForwardArgs {
  std::optional<std::string> arch;  // overrides the config
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> input;  // A2TSR image, 3 x H x W
  std::optional<std::string> random;           // "HxW"
  std::uint64_t seed = 0;                      // random input
  std::filesystem::path out = "a2fpn-out/forward";
};

struct CountArgs {
  std::string arch = "a2fpn";
  std::string image_size = "1280x832";  // WxH
  std::string backbone = "resnet50";
  std::optional<std::string> diff;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
};

struct TrainArgs {
  std::optional<std::string> arch;  // overrides the config; default a2fpn
  std::optional<std::filesystem::path> config;  // default: toy preset
  std::size_t steps = 500;
  double lr = 0.05;
  std::optional<std::uint64_t> seed;
  std::size_t images = 8;
  std::filesystem::path out = "a2fpn-out/train-toy";
};

// Each command prints a human-readable summary to `log`, writes its
// artifacts and run_report.json under the output directory and returns an
// exit code. Errors are reported on `err`.
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& log, std::ostream& err);
int cmd_oracle(const OracleArgs& args, std::ostream& log, std::ostream& err);
int cmd_forward(const ForwardArgs& args, std::ostream& log, std::ostream& err);
int cmd_count(const CountArgs& args, std::ostream& log, std::ostream& err);
int cmd_train_toy(const TrainArgs& args, std::ostream& log, std::ostream& err);

/// Parses argv and dispatches to a command.
int run(int argc, const char* const* argv, std::ostream& log, std::ostream& err);

}  // namespace a2fpn::cli
