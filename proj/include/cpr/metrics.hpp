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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpr/manifest.hpp"
#include "cpr/tensor.hpp"

namespace cpr {

struct ScoredSample {
  double score = 0.0;
  bool positive = false;
};

// Mann-Whitney AUROC; ties count one half.
double auroc(std::span<const ScoredSample> samples);

// Step-interpolated average precision over descending unique thresholds.
double average_precision(std::span<const ScoredSample> samples);

enum class Connectivity { kFour = 4, kEight = 8 };

// Connected components of the non-zero cells, labeled 0..count-1; -1 elsewhere.
RowMatrix<int> label_components(const ScoreGrid& mask, Connectivity connectivity, int* count = nullptr);

struct PixelEvalPair {
  ScoreGrid anomaly_map;
  ScoreGrid ground_truth;  // strictly 0 / 1
};

// Per-region overlap integrated over false-positive rate in [0, fpr_limit],
// normalized by fpr_limit. Exact sweep over every distinct map value.
double pro_score(std::span<const PixelEvalPair> pairs, double fpr_limit = 0.3,
                 Connectivity connectivity = Connectivity::kEight);

struct MetricReport {
  double image_auroc = 0.0;
  double pixel_auroc = 0.0;
  double pro = 0.0;
  double ap = 0.0;
  std::size_t image_positives = 0;
  std::size_t image_negatives = 0;
  std::size_t pixel_positives = 0;
  std::size_t pixel_negatives = 0;
};

struct EvaluatedImage {
  std::string image_id;
  double image_score = 0.0;
  ScoreGrid anomaly_map;
  ImageLabel label = ImageLabel::kUnknown;
  // Absent for normal images means an all-zero mask.
  std::optional<ScoreGrid> ground_truth;
};

MetricReport evaluate(std::span<const EvaluatedImage> images, double fpr_limit = 0.3,
                      Connectivity connectivity = Connectivity::kEight);

std::string report_to_json(const MetricReport& report);

}  // namespace cpr
