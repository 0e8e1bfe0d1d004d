// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include "a2fpn/init.hpp"
#include "a2fpn/tensor.hpp"
#include "a2fpn/tensor_io.hpp"

namespace a2fpn {
namespace {

TEST(Tensor, ShapeAndIndexing) {
  Tensor<double> t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  t(1, 2, 3) = 5.0;
  EXPECT_EQ(t[23], 5.0);
  EXPECT_EQ(shape_to_string(t.shape()), "[2x3x4]");
}

TEST(Tensor, RejectsMismatchedBuffer) {
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>(3)), DimensionError);
}

TEST(Tensor, ZerosLikeKeepsEmptyTensorsEmpty) {
  EXPECT_TRUE(Tensor<float>::zeros_like(Tensor<float>()).empty());
  const auto z = Tensor<float>::zeros_like(Tensor<float>({3, 2}, 1.0f));
  EXPECT_EQ(z.shape(), (Shape{3, 2}));
  EXPECT_EQ(z[5], 0.0f);
}

TEST(Tensor, ReshapeKeepsData) {
  Rng rng(1);
  const auto t = random_normal<double>({2, 6}, rng);
  const auto r = t.reshaped({3, 4});
  EXPECT_EQ(r.shape(), (Shape{3, 4}));
  EXPECT_EQ(r[7], t[7]);
  EXPECT_THROW(t.reshaped({5, 2}), DimensionError);
}

TEST(TensorIo, RoundTripsBothDtypes) {
  Rng rng(2);
  const auto f = random_normal<float>({3, 5, 7}, rng);
  const auto d = random_normal<double>({4, 2}, rng);
  EXPECT_EQ(std::get<Tensor<float>>(decode_a2tsr(encode_a2tsr(f))), f);
  EXPECT_EQ(std::get<Tensor<double>>(decode_a2tsr(encode_a2tsr(d))), d);
}

TEST(TensorIo, LayoutMatchesFormat) {
  const Tensor<float> t({1, 2}, std::vector<float>{1.0f, -2.0f});
  const std::string bytes = encode_a2tsr(t);
  ASSERT_GE(bytes.size(), 11u);
  EXPECT_EQ(bytes.substr(0, 6), std::string("A2TSR\0", 6));
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 1);
  std::uint32_t header_len = 0;
  for (int i = 0; i < 4; ++i)
    header_len |= std::uint32_t{static_cast<unsigned char>(bytes[7 + i])} << (8 * i);
  const std::string header = bytes.substr(11, header_len);
  EXPECT_NE(header.find("\"f32\""), std::string::npos);
  ASSERT_EQ(bytes.size(), 11 + header_len + 2 * sizeof(float));
  float payload[2];
  std::memcpy(payload, bytes.data() + 11 + header_len, sizeof payload);
  EXPECT_EQ(payload[0], 1.0f);
  EXPECT_EQ(payload[1], -2.0f);
}

TEST(TensorIo, RejectsCorruptInput) {
  EXPECT_THROW(decode_a2tsr("A2TSQ\0\x01"), FormatError);
  std::string bytes = encode_a2tsr(Tensor<double>({2}, 1.0));
  EXPECT_THROW(decode_a2tsr(bytes.substr(0, bytes.size() - 1)), FormatError);
}

TEST(TensorIo, FileRoundTripAndConversion) {
  const auto path = std::filesystem::temp_directory_path() / "a2fpn_tensor_test.a2tsr";
  const Tensor<double> t({2, 2}, std::vector<double>{0.5, 1.5, -2.0, 4.0});
  write_a2tsr(path, t);
  EXPECT_EQ(load_tensor<double>(path), t);
  EXPECT_EQ(load_tensor<float>(path), t.cast<float>());
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace a2fpn
