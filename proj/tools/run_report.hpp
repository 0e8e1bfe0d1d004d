// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace a2fpn::cli {

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of the compact dump of `config` (object keys sorted).
std::string config_digest(const nlohmann::json& config);

struct RunReport {
  std::string command;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string outcome;  // "pass", "fail" or "error"
  std::string message;
  std::vector<std::filesystem::path> artifacts;  // relative to the output directory
  double wall_seconds = 0;
};

nlohmann::json to_json(const RunReport& r);

/// Writes run_report.json into `out_dir` and returns its path.
std::filesystem::path write_run_report(const RunReport& r, const std::filesystem::path& out_dir);

}  // namespace a2fpn::cli
