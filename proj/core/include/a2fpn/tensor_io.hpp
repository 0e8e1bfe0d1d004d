// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include "a2fpn/tensor.hpp"

namespace a2fpn {

// A2TSR layout:
//   "A2TSR\0" | version (u8 = 1) | header length (u32 LE) |
//   UTF-8 JSON header {"dtype": "f32"|"f64", "shape": [...]} |
//   row-major little-endian payload

inline constexpr std::string_view kA2tsrMagic{"A2TSR\0", 6};
inline constexpr std::uint8_t kA2tsrVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

template <typename T>
std::string encode_a2tsr(const Tensor<T>& t);

AnyTensor decode_a2tsr(std::string_view bytes);

template <typename T>
void write_a2tsr(const std::filesystem::path& path, const Tensor<T>& t);

AnyTensor read_a2tsr(const std::filesystem::path& path);

/// Reads a tensor file and converts it to `T` if the stored dtype differs.
template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  return std::visit([](const auto& t) { return t.template cast<T>(); },
                    read_a2tsr(path));
}

}  // namespace a2fpn
