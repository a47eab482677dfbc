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

#include <span>
#include <string>
#include <vector>

#include "cpr/codebook.hpp"

namespace cpr {

// Geometry of the pseudo-label regions: a border band of width
// border_frac * side and a centered box of side center_frac * side.
struct RegionSpec {
  double border_frac = 0.125;
  double center_frac = 0.5;

  void validate() const;
};

struct RegionGeometry {
  Index height = 0;
  Index width = 0;
  Index border_rows = 0;
  Index border_cols = 0;
  Index center_row_begin = 0;
  Index center_row_end = 0;
  Index center_col_begin = 0;
  Index center_col_end = 0;

  bool in_border(Index r, Index c) const noexcept {
    return r < border_rows || r >= height - border_rows || c < border_cols || c >= width - border_cols;
  }
  bool in_center(Index r, Index c) const noexcept {
    return r >= center_row_begin && r < center_row_end && c >= center_col_begin && c < center_col_end;
  }
};

RegionGeometry region_geometry(const RegionSpec& spec, Index height, Index width);

enum class PatchLabel { kBackground = 0, kForeground = 1 };

struct PseudoLabel {
  PatchCoordinate coord;
  PatchLabel label = PatchLabel::kBackground;
};

struct PseudoLabelSet {
  std::string image_id;
  std::int32_t majority_code = 0;
  bool center_empty = false;  // every center cell carried the majority code
  std::vector<PseudoLabel> samples;

  std::size_t count(PatchLabel label) const;
};

PseudoLabelSet pseudo_labels(const CodeMap& codes, const RegionSpec& region, Index n_clusters,
                             std::string image_id = {});

// Per-patch logistic classifier over raw patch vectors (a 1x1 convolution).
struct LinearForegroundModel {
  Eigen::VectorXf weights;
  float bias = 0.0f;

  void validate() const;
  friend bool operator==(const LinearForegroundModel& a, const LinearForegroundModel& b) {
    return a.bias == b.bias && a.weights.size() == b.weights.size() && a.weights == b.weights;
  }
};

struct ForegroundTrainOptions {
  int epochs = 200;
  double learning_rate = 0.1;
};

struct ForegroundTrainReport {
  std::vector<double> loss;  // training loss before each epoch, then final
  double step_size = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// Full-batch gradient descent on the logistic loss from zero initialization.
// Features are standardized internally and the result folded back so the model
// applies to raw vectors.
LinearForegroundModel train_foreground(std::span<const FeatureTensor> raw_tensors,
                                       std::span<const PseudoLabelSet> labels,
                                       const ForegroundTrainOptions& options = {},
                                       ForegroundTrainReport* report = nullptr);

ScoreGrid predict_foreground(const FeatureTensor& raw, const LinearForegroundModel& model);

// Element-wise maximum of the query map and every neighbor map.
ScoreGrid fuse_foreground(const ScoreGrid& f_tst, std::span<const ScoreGrid> f_neighbors);
ScoreGrid fuse_foreground(const ScoreGrid& f_tst, const std::vector<ScoreGrid>& reference_maps,
                          std::span<const Index> neighbor_ids);

// Up-samples a_mul to the foreground grid when needed, then multiplies.
ScoreGrid apply_foreground(const ScoreGrid& a_mul, const ScoreGrid& f_star);

}  // namespace cpr
