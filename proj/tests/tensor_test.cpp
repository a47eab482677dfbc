/* Copyright 2026 The CPR Engine Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "cpr/tensor.hpp"

#include <gtest/gtest.h>

#include "cpr/errors.hpp"
#include "test_util.hpp"

namespace cpr {
namespace {

FormatErrorKind decode_kind(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_tensor(bytes);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode_tensor accepted malformed bytes";
  return FormatErrorKind::kBadMagic;
}

TEST(TensorFormatTest, SmallestTensorIs29Bytes) {
  FeatureTensor t(1, 1, 1);
  const auto bytes = encode_tensor(t);
  ASSERT_EQ(bytes.size(), kTensorHeaderBytes + 4);
  const std::vector<std::uint8_t> expected = {'C', 'P', 'R', 'T', 1, 0, 0, 0, 0, 3, 1, 0, 0, 0, 1,
                                              0,   0,   0,   1,   0, 0, 0, 1, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(bytes, expected);
}

TEST(TensorFormatTest, HeaderFields) {
  FeatureTensor t(258, 3, 2, 7);
  const auto bytes = encode_tensor(t);
  const TensorHeader h = decode_tensor_header(bytes);
  EXPECT_EQ(h.height, 258u);
  EXPECT_EQ(h.width, 3u);
  EXPECT_EQ(h.channels, 2u);
  EXPECT_EQ(h.scale_id, 7);
  EXPECT_EQ(bytes[10], 2);  // 258 = 0x0102, little-endian
  EXPECT_EQ(bytes[11], 1);
}

TEST(TensorFormatTest, PayloadMatchesManualPacking) {
  Rng rng(11);
  const FeatureTensor t = testing::random_tensor(rng, 2, 2, 3);
  std::vector<float> order;
  for (Index r = 0; r < 2; ++r)
    for (Index c = 0; c < 2; ++c)
      for (Index k = 0; k < 3; ++k) order.push_back(t(r, c, k));
  const auto bytes = encode_tensor(t);
  const std::vector<std::uint8_t> payload(bytes.begin() + kTensorHeaderBytes, bytes.end());
  EXPECT_EQ(payload, oracle::pack_f32_le(order));
}

TEST(TensorFormatTest, RoundTripDistinctValues) {
  FeatureTensor t(3, 4, 2);
  for (Index i = 0; i < t.patches().size(); ++i) t.patches().data()[i] = 0.5f * static_cast<float>(i) - 3.0f;
  const FeatureTensor back = decode_tensor(encode_tensor(t));
  EXPECT_EQ(back, t);
  EXPECT_FLOAT_EQ(back(2, 3, 1), 0.5f * 23 - 3.0f);
}

TEST(TensorFormatTest, FileRoundTrip) {
  const auto dir = testing::scratch_dir("tensor_rt");
  Rng rng(3);
  const FeatureTensor t = testing::random_tensor(rng, 5, 7, 4, 2);
  write_tensor(t, dir / "a.cprt");
  EXPECT_EQ(std::filesystem::file_size(dir / "a.cprt"), kTensorHeaderBytes + 5 * 7 * 4 * 4);
  EXPECT_EQ(read_tensor(dir / "a.cprt"), t);
  EXPECT_EQ(read_tensor_header(dir / "a.cprt").scale_id, 2);
}

TEST(TensorFormatTest, RejectsMalformedInput) {
  const auto good = encode_tensor(FeatureTensor(2, 2, 2));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(decode_kind(bad_magic), FormatErrorKind::kBadMagic);

  auto truncated = good;
  truncated.pop_back();
  EXPECT_EQ(decode_kind(truncated), FormatErrorKind::kTruncated);

  auto short_header = good;
  short_header.resize(10);
  EXPECT_EQ(decode_kind(short_header), FormatErrorKind::kTruncated);

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(decode_kind(trailing), FormatErrorKind::kTrailingBytes);

  auto version = good;
  version[4] = 2;
  EXPECT_EQ(decode_kind(version), FormatErrorKind::kBadVersion);

  auto dtype = good;
  dtype[8] = 1;
  EXPECT_EQ(decode_kind(dtype), FormatErrorKind::kBadDtype);

  auto ndim = good;
  ndim[9] = 2;
  EXPECT_EQ(decode_kind(ndim), FormatErrorKind::kBadNdim);
}

TEST(TensorFormatTest, RejectsZeroDimensionAndNaN) {
  auto zero = encode_tensor(FeatureTensor(1, 1, 1));
  zero[10] = 0;
  EXPECT_THROW(decode_tensor(std::vector<std::uint8_t>(zero.begin(), zero.end() - 4)), ValidationError);

  FeatureTensor t(1, 1, 2);
  t(0, 0, 1) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(decode_tensor(encode_tensor(t)), ValidationError);
}

TEST(TensorFormatTest, MissingFileIsReadError) {
  EXPECT_THROW(read_tensor("/nonexistent/dir/x.cprt"), ReadError);
}

TEST(TensorTest, GridConversionRoundTrip) {
  Rng rng(5);
  const ScoreGrid g = testing::random_grid(rng, 3, 5);
  const FeatureTensor t = grid_to_tensor(g);
  EXPECT_EQ(t.channels(), 1);
  EXPECT_EQ(tensor_to_grid(t), g);
  EXPECT_THROW(tensor_to_grid(FeatureTensor(2, 2, 2)), ShapeError);
}

}  // namespace
}  // namespace cpr
