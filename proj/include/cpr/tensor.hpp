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

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cpr {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One patch vector per row; row index = r * width + c.
using PatchMatrix = RowMatrix<float>;

// Dense 2-D score grid (anomaly maps, foreground maps, masks).
using ScoreGrid = RowMatrix<float>;

struct PatchCoordinate {
  Index row = 0;
  Index col = 0;
  friend bool operator==(const PatchCoordinate&, const PatchCoordinate&) = default;
};

// H x W grid of C-dimensional patch features at one backbone scale.
// Storage is row-major over (row, col, channel) so a patch vector is contiguous.
class FeatureTensor {
 public:
  FeatureTensor() = default;
  FeatureTensor(Index height, Index width, Index channels, int scale_id = 1);
  FeatureTensor(Index height, Index width, PatchMatrix patches, int scale_id = 1);

  Index height() const noexcept { return height_; }
  Index width() const noexcept { return width_; }
  Index channels() const noexcept { return patches_.cols(); }
  Index num_patches() const noexcept { return height_ * width_; }
  int scale_id() const noexcept { return scale_id_; }
  void set_scale_id(int scale_id) noexcept { scale_id_ = scale_id; }

  const PatchMatrix& patches() const noexcept { return patches_; }
  PatchMatrix& patches() noexcept { return patches_; }

  auto patch(Index row, Index col) const { return patches_.row(row * width_ + col); }
  auto patch(Index row, Index col) { return patches_.row(row * width_ + col); }

  float operator()(Index row, Index col, Index ch) const { return patches_(row * width_ + col, ch); }
  float& operator()(Index row, Index col, Index ch) { return patches_(row * width_ + col, ch); }

  std::span<const float> values() const noexcept {
    return {patches_.data(), static_cast<std::size_t>(patches_.size())};
  }

  bool same_shape(const FeatureTensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels() == other.channels();
  }

  // Throws ValidationError on empty dimensions or non-finite values.
  void validate() const;

  friend bool operator==(const FeatureTensor& a, const FeatureTensor& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.scale_id_ == b.scale_id_ &&
           a.patches_.rows() == b.patches_.rows() && a.patches_.cols() == b.patches_.cols() &&
           a.patches_ == b.patches_;
  }

 private:
  Index height_ = 0;
  Index width_ = 0;
  int scale_id_ = 1;
  PatchMatrix patches_;
};

// CPRT on-disk format.
//   0..3   magic "CPRT"
//   4..7   version u32 LE (1)
//   8      dtype u8 (0 = float32 LE)
//   9      ndim u8 (3)
//   10..21 H, W, C as u32 LE
//   22     scale_id u8
//   23..24 reserved, zero
//   25..   H*W*C float32 LE, row-major (row, col, channel)
inline constexpr std::size_t kTensorHeaderBytes = 25;
inline constexpr std::uint32_t kTensorFormatVersion = 1;

struct TensorHeader {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  int scale_id = 0;
  friend bool operator==(const TensorHeader&, const TensorHeader&) = default;
};

std::vector<std::uint8_t> encode_tensor(const FeatureTensor& t);
FeatureTensor decode_tensor(std::span<const std::uint8_t> bytes);
TensorHeader decode_tensor_header(std::span<const std::uint8_t> bytes);

void write_tensor(const FeatureTensor& t, const std::filesystem::path& path);
FeatureTensor read_tensor(const std::filesystem::path& path);
TensorHeader read_tensor_header(const std::filesystem::path& path);

// Score grids travel as H x W x 1 tensors.
FeatureTensor grid_to_tensor(const ScoreGrid& grid, int scale_id = 1);
ScoreGrid tensor_to_grid(const FeatureTensor& t);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace cpr
