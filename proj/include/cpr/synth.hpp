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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cpr/manifest.hpp"
#include "cpr/tensor.hpp"

namespace cpr {

// Procedural stand-in for backbone features: an "object" box carrying a smooth
// random field, shared by every image, over a near-constant background, plus
// per-image noise. Anomalous images get a rectangular feature offset inside the
// object and a matching mask.
struct SynthOptions {
  Index n_normal = 20;
  Index n_anomalous = 10;
  std::uint64_t seed = 0;
  Index height = 32;
  Index width = 32;
  Index channels = 16;
  bool second_scale = true;    // also emit a half-resolution scale-2 tensor
  Index jitter = 0;            // max per-image object shift in cells
  double noise_sigma = 0.05;   // per channel
  double defect_strength = 10.0;  // defect offset norm, in units of sigma * sqrt(C)
  Index holdout = -1;          // normals kept out of train.json; -1 = n_normal / 4

  void validate() const;
};

struct SynthImage {
  std::string image_id;
  ImageLabel label = ImageLabel::kNormal;
  std::map<int, FeatureTensor> tensors;
  std::optional<ScoreGrid> mask;  // scale-1 grid, anomalous images only
  FeatureTensor normal_field;     // scale-1 features before noise and defect
};

struct SynthDataset {
  SynthOptions options;
  std::vector<SynthImage> images;  // normals first, then anomalous
};

SynthDataset generate_synthetic(const SynthOptions& options);

struct SynthFiles {
  std::filesystem::path manifest;  // every image
  std::filesystem::path train;     // normal references
  std::filesystem::path test;      // held-out normals + anomalous
};

// Writes <id>_s<scale>.cprt, <id>_mask.cprt and the three manifests.
SynthFiles write_synthetic(const SynthDataset& data, const std::filesystem::path& out_dir);

}  // namespace cpr
