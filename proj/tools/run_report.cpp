// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "run_report.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <openssl/evp.h>

namespace a2fpn::cli {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    char buf[3];
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string config_digest(const nlohmann::json& config) { return sha256_hex(config.dump()); }

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& a : r.artifacts) artifacts.push_back(a.generic_string());
  nlohmann::json j{{"command", r.command},
                   {"config_digest", r.config_digest},
                   {"seed", r.seed},
                   {"outcome", r.outcome},
                   {"artifacts", artifacts},
                   {"wall_time_s", r.wall_seconds}};
  if (!r.message.empty()) j["message"] = r.message;
  return j;
}

std::filesystem::path write_run_report(const RunReport& r, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto path = out_dir / "run_report.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(r).dump(2) << '\n';
  return path;
}

}  // namespace a2fpn::cli
