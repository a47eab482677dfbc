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

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpr/codebook.hpp"
#include "cpr/foreground.hpp"
#include "cpr/global_retrieval.hpp"
#include "cpr/local_retrieval.hpp"
#include "cpr/manifest.hpp"

namespace cpr {

class WorkerPool;

struct CprConfig {
  Index k_neighbors = 10;
  Index grid_s = 5;
  Index n_clusters = 12;
  Index tau = 5;
  Index top_t = 512;
  std::map<int, Index> windows = {{1, 3}, {2, 1}};  // scale_id -> window size
  bool feb_enabled = true;
  double kl_eps = kDefaultKlEps;
  std::uint64_t seed = 0;
  RegionSpec region;
  ForegroundTrainOptions feb_training;
  std::size_t codebook_cap = 200000;  // pooled vectors used to fit the codebook

  void validate() const;
  Index window_for(int scale_id) const;
  friend bool operator==(const CprConfig& a, const CprConfig& b);
};

// Field names mirror CprConfig; keys absent from the document keep the values
// of `base`. Unknown keys are rejected.
std::string config_to_json(const CprConfig& config);
CprConfig config_from_json(std::string_view json_text, const CprConfig& base = {});

// Documented speed/accuracy operating points; the engine takes the local
// feature width from the tensors it is given.
struct OperatingPoint {
  std::string_view name;
  Index local_dim;
};
inline constexpr OperatingPoint kStandard{"standard", 384};
inline constexpr OperatingPoint kFast{"fast", 64};
inline constexpr OperatingPoint kFaster{"faster", 16};

struct ForegroundBranch {
  LinearForegroundModel model;
  std::vector<ScoreGrid> reference_maps;  // index-aligned with the global index
};

// Scale 1 feeds global retrieval, the foreground branch and local retrieval;
// every other scale only feeds local retrieval.
struct CprModel {
  CprConfig config;
  Codebook codebook;
  GlobalIndex global_index;
  std::map<int, LocalFeatureBank> banks;
  std::optional<ForegroundBranch> feb;

  std::size_t size() const noexcept { return global_index.size(); }
  void validate() const;
};

struct ReferenceImage {
  std::string image_id;
  std::map<int, FeatureTensor> tensors;
};

struct BuildInfo {
  std::vector<std::string> warnings;
  Index pooled_vectors = 0;
  Index codebook_vectors = 0;
  int kmeans_iterations = 0;
  std::optional<ForegroundTrainReport> feb_report;
};

CprModel build_model(std::span<const ReferenceImage> references, const CprConfig& config,
                     BuildInfo* info = nullptr, WorkerPool* pool = nullptr);
// Every entry must be labeled normal.
CprModel build_model(const DatasetManifest& manifest, const CprConfig& config, BuildInfo* info = nullptr,
                     WorkerPool* pool = nullptr);

// Copy of the model with one reference dropped from every store.
CprModel without_reference(const CprModel& model, std::size_t index);

struct StageTimings {
  double global_ms = 0.0;
  std::map<int, double> local_ms;
  double fusion_ms = 0.0;
  double total_ms = 0.0;
};

struct DetectionResult {
  ScoreGrid anomaly_map;  // final map on the scale-1 grid
  double image_score = 0.0;
  NeighborList neighbors;
  std::map<int, ScoreGrid> per_scale_maps;
  std::optional<ScoreGrid> foreground;  // fused foreground map when the branch ran
  Index zero_norm_cells = 0;

  std::vector<Index> neighbor_ids() const;
};

DetectionResult infer(const CprModel& model, const std::map<int, FeatureTensor>& query, WorkerPool* pool = nullptr,
                      StageTimings* timings = nullptr);

// Sum of the min(t, H*W) largest values.
double image_score(const ScoreGrid& map, Index t);

}  // namespace cpr
