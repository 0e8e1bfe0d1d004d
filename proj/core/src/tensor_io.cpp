// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2fpn/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <type_traits>

#include <nlohmann/json.hpp>

namespace a2fpn {

static_assert(std::endian::native == std::endian::little,
              "A2TSR payloads are written in host order on little-endian hosts");

namespace {

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else return "f64";
}

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32_le(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

template <typename T>
Tensor<T> decode_payload(std::string_view payload, Shape shape) {
  const std::size_t n = shape_numel(shape);
  if (payload.size() != n * sizeof(T)) {
    throw FormatError("A2TSR payload holds " + std::to_string(payload.size()) +
                      " bytes, expected " + std::to_string(n * sizeof(T)));
  }
  std::vector<T> data(n);
  if (n) std::memcpy(data.data(), payload.data(), payload.size());
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

template <typename T>
std::string encode_a2tsr(const Tensor<T>& t) {
  const nlohmann::json header = {{"dtype", dtype_name<T>()},
                                 {"shape", t.shape()}};
  const std::string text = header.dump();
  std::string out(kA2tsrMagic);
  out.push_back(static_cast<char>(kA2tsrVersion));
  put_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  const auto* raw = reinterpret_cast<const char*>(t.data().data());
  out.append(raw, t.size() * sizeof(T));
  return out;
}

AnyTensor decode_a2tsr(std::string_view bytes) {
  const std::size_t fixed = kA2tsrMagic.size() + 1 + 4;
  if (bytes.size() < fixed || bytes.substr(0, kA2tsrMagic.size()) != kA2tsrMagic) {
    throw FormatError("not an A2TSR stream (bad magic)");
  }
  const auto version = static_cast<std::uint8_t>(bytes[kA2tsrMagic.size()]);
  if (version != kA2tsrVersion) {
    throw FormatError("unsupported A2TSR version " + std::to_string(version));
  }
  const std::uint32_t header_len = get_u32_le(bytes, kA2tsrMagic.size() + 1);
  if (bytes.size() < fixed + header_len) throw FormatError("truncated A2TSR header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(fixed, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed A2TSR header: ") + e.what());
  }
  if (!header.contains("dtype") || !header.contains("shape")) {
    throw FormatError("A2TSR header lacks dtype/shape");
  }
  const auto dtype = header["dtype"].get<std::string>();
  auto shape = header["shape"].get<Shape>();
  const auto payload = bytes.substr(fixed + header_len);
  if (dtype == "f32") return decode_payload<float>(payload, std::move(shape));
  if (dtype == "f64") return decode_payload<double>(payload, std::move(shape));
  throw FormatError("unknown A2TSR dtype '" + dtype + "'");
}

template <typename T>
void write_a2tsr(const std::filesystem::path& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_a2tsr(t);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

AnyTensor read_a2tsr(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)),
                          std::istreambuf_iterator<char>());
  return decode_a2tsr(bytes);
}

template std::string encode_a2tsr(const Tensor<float>&);
template std::string encode_a2tsr(const Tensor<double>&);
template void write_a2tsr(const std::filesystem::path&, const Tensor<float>&);
template void write_a2tsr(const std::filesystem::path&, const Tensor<double>&);

}  // namespace a2fpn
