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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cpr/errors.hpp"
#include "cpr/tensor.hpp"

namespace cpr {

class WorkerPool;

// Odd side length of the square search neighborhood; 1 means same coordinate.
struct RetrievalWindow {
  Index size = 1;

  Index radius() const noexcept { return (size - 1) / 2; }
  // Full-grid window for an h x w grid.
  static RetrievalWindow covering(Index height, Index width) { return {2 * std::max(height, width) - 1}; }
  void validate(Index height, Index width) const;
};

// L2-normalizes each row in place (computed in double). Zero rows stay zero;
// returns a mask with 1 for every zero row.
std::vector<std::uint8_t> normalize_rows(PatchMatrix& rows);

// Row-planar copy of a patch matrix: for each grid row, one run of W cells
// per channel. Stored as a W x (H * C) column-major matrix, column r * C + k.
// Only kept for narrow normalized banks, where it is the faster layout for
// the window search.
using PlanarMatrix = Eigen::MatrixXf;
PlanarMatrix to_planar(const PatchMatrix& rows, Index height, Index width);
inline constexpr Index kPlanarMaxChannels = 64;

// Stacked local feature tensors of the reference set at one scale.
struct LocalFeatureBank {
  int scale_id = 1;
  Index height = 0;
  Index width = 0;
  Index channels = 0;
  bool normalized = false;
  std::vector<PatchMatrix> tensors;
  std::vector<std::vector<std::uint8_t>> zero_rows;  // per tensor, per patch
  std::vector<PlanarMatrix> planar;                  // empty unless uses_planar()

  std::size_t size() const noexcept { return tensors.size(); }

  static LocalFeatureBank build(int scale_id, std::span<const FeatureTensor> tensors, bool normalize = true);
  void add(const FeatureTensor& t);
  // Appends rows that are already in bank form (normalized if the bank is).
  void append(PatchMatrix rows, std::vector<std::uint8_t> zero);
  bool uses_planar() const noexcept { return normalized && channels <= kPlanarMaxChannels; }
  FeatureTensor tensor(std::size_t i) const { return FeatureTensor(height, width, tensors[i], scale_id); }
};

struct LocalMatch {
  ScoreGrid map;              // per-scale distance map, values in [0, 2]
  Index zero_norm_cells = 0;  // query cells with a zero vector (scored 1)
};

// General cosine similarity; zero vectors have similarity 0.
template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  const double na = a.template cast<double>().norm();
  const double nb = b.template cast<double>().norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.template cast<double>().dot(b.template cast<double>()) / (na * nb);
}

// Window-constrained nearest-neighbor cosine distance of every query patch
// against the listed references.
LocalMatch local_nn(const FeatureTensor& query, const LocalFeatureBank& bank, std::span<const Index> neighbor_ids,
                    RetrievalWindow window, WorkerPool* pool = nullptr);

// Bilinear up-sampling with half-pixel sample centers.
template <typename Derived>
ScoreGrid upsample(const Eigen::MatrixBase<Derived>& map, Index out_h, Index out_w) {
  const Index in_h = map.rows();
  const Index in_w = map.cols();
  if (out_h < in_h || out_w < in_w) {
    throw ArgumentError("upsample cannot shrink a " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                        " map to " + std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  // Same size: every sample lands on a cell center.
  if (out_h == in_h && out_w == in_w) return map;
  const auto source = [](Index i, Index in, Index out, Index& lo, Index& hi, double& frac) {
    double s = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    if (s < 0.0) s = 0.0;
    lo = static_cast<Index>(std::floor(s));
    if (lo > in - 1) lo = in - 1;
    hi = lo + 1 < in ? lo + 1 : in - 1;
    frac = s - static_cast<double>(lo);
  };
  ScoreGrid out(out_h, out_w);
  for (Index r = 0; r < out_h; ++r) {
    Index y0, y1;
    double fy;
    source(r, in_h, out_h, y0, y1, fy);
    for (Index c = 0; c < out_w; ++c) {
      Index x0, x1;
      double fx;
      source(c, in_w, out_w, x0, x1, fx);
      const double top = (1.0 - fx) * map(y0, x0) + fx * map(y0, x1);
      const double bottom = (1.0 - fx) * map(y1, x0) + fx * map(y1, x1);
      out(r, c) = static_cast<float>((1.0 - fy) * top + fy * bottom);
    }
  }
  return out;
}

// Element-wise sum of all maps after up-sampling each to out_h x out_w.
ScoreGrid aggregate_scales(std::span<const ScoreGrid> maps, Index out_h, Index out_w);

}  // namespace cpr
