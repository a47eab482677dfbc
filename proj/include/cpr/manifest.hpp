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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpr/tensor.hpp"

namespace cpr {

enum class ImageLabel { kNormal, kAnomalous, kUnknown };

std::string_view to_string(ImageLabel label);
ImageLabel parse_label(std::string_view text);

struct ManifestEntry {
  std::string image_id;
  std::map<int, std::filesystem::path> tensor_paths;  // scale_id -> CPRT file
  ImageLabel label = ImageLabel::kUnknown;
  std::optional<std::filesystem::path> ground_truth_mask_path;
};

// Reference or query image list. Paths are stored as written in the document;
// relative paths resolve against `base_dir`.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  }
  // Per-scale (H, W, C) shared by every entry; filled in by load_manifest.
  std::map<int, TensorHeader> scale_shapes;
};

// Parses and validates: non-empty, unique ids, every file present, identical
// per-scale shapes across entries.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir);
void validate_manifest(DatasetManifest& manifest);

std::string manifest_to_json(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Loads every listed tensor of one entry, keyed by scale.
std::map<int, FeatureTensor> load_entry_tensors(const DatasetManifest& manifest, const ManifestEntry& entry);

}  // namespace cpr
