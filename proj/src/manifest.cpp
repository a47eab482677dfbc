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

#include "cpr/manifest.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "cpr/errors.hpp"

namespace cpr {

using nlohmann::json;

std::string_view to_string(ImageLabel label) {
  switch (label) {
    case ImageLabel::kNormal:
      return "normal";
    case ImageLabel::kAnomalous:
      return "anomalous";
    case ImageLabel::kUnknown:
      return "unknown";
  }
  return "unknown";
}

ImageLabel parse_label(std::string_view text) {
  if (text == "normal") return ImageLabel::kNormal;
  if (text == "anomalous") return ImageLabel::kAnomalous;
  if (text == "unknown") return ImageLabel::kUnknown;
  throw ManifestError(ManifestErrorKind::kSyntax, "unknown label '" + std::string(text) + "'");
}

DatasetManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ManifestError(ManifestErrorKind::kSyntax, std::string("manifest is not valid JSON: ") + e.what());
  }
  DatasetManifest manifest;
  manifest.base_dir = base_dir;
  try {
    for (const auto& item : doc.at("entries")) {
      ManifestEntry entry;
      entry.image_id = item.at("image_id").get<std::string>();
      for (const auto& [scale, p] : item.at("tensor_paths").items()) {
        int scale_id = 0;
        try {
          scale_id = std::stoi(scale);
        } catch (const std::exception&) {
          throw ManifestError(ManifestErrorKind::kSyntax, "tensor_paths key '" + scale + "' is not a scale id");
        }
        entry.tensor_paths.emplace(scale_id, p.get<std::string>());
      }
      entry.label = parse_label(item.value("label", std::string("unknown")));
      if (auto it = item.find("ground_truth_mask_path"); it != item.end() && !it->is_null()) {
        entry.ground_truth_mask_path = it->get<std::string>();
      }
      manifest.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw ManifestError(ManifestErrorKind::kSyntax, std::string("malformed manifest: ") + e.what());
  }
  return manifest;
}

void validate_manifest(DatasetManifest& manifest) {
  if (manifest.entries.empty()) {
    throw ManifestError(ManifestErrorKind::kEmpty, "empty dataset");
  }
  std::set<std::string> seen;
  manifest.scale_shapes.clear();
  for (const auto& entry : manifest.entries) {
    if (!seen.insert(entry.image_id).second) {
      throw ManifestError(ManifestErrorKind::kDuplicateId, "duplicate image_id '" + entry.image_id + "'");
    }
    if (entry.tensor_paths.empty()) {
      throw ManifestError(ManifestErrorKind::kSyntax, "entry '" + entry.image_id + "' lists no tensors");
    }
    for (const auto& [scale, rel] : entry.tensor_paths) {
      const auto path = manifest.resolve(rel);
      if (!std::filesystem::exists(path)) {
        throw ManifestError(ManifestErrorKind::kMissingFile,
                            "missing tensor file for '" + entry.image_id + "': " + path.string());
      }
      TensorHeader h = read_tensor_header(path);
      h.scale_id = scale;
      auto [it, inserted] = manifest.scale_shapes.emplace(scale, h);
      if (!inserted && !(it->second == h)) {
        std::ostringstream msg;
        msg << "shape mismatch at scale " << scale << " for '" << entry.image_id << "': " << h.height << "x"
            << h.width << "x" << h.channels << " vs " << it->second.height << "x" << it->second.width << "x"
            << it->second.channels;
        throw ManifestError(ManifestErrorKind::kShapeMismatch, msg.str());
      }
    }
    if (entry.ground_truth_mask_path) {
      const auto path = manifest.resolve(*entry.ground_truth_mask_path);
      if (!std::filesystem::exists(path)) {
        throw ManifestError(ManifestErrorKind::kMissingFile,
                            "missing mask file for '" + entry.image_id + "': " + path.string());
      }
    }
  }
  // Every entry must provide the same set of scales.
  for (const auto& entry : manifest.entries) {
    if (entry.tensor_paths.size() != manifest.scale_shapes.size()) {
      throw ManifestError(ManifestErrorKind::kShapeMismatch,
                          "entry '" + entry.image_id + "' does not provide every scale");
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ReadError("cannot open manifest " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  DatasetManifest manifest = parse_manifest(buffer.str(), path.parent_path());
  validate_manifest(manifest);
  return manifest;
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json paths = json::object();
    for (const auto& [scale, p] : e.tensor_paths) paths[std::to_string(scale)] = p.generic_string();
    json item = {{"image_id", e.image_id},
                 {"tensor_paths", paths},
                 {"label", std::string(to_string(e.label))},
                 {"ground_truth_mask_path", nullptr}};
    if (e.ground_truth_mask_path) item["ground_truth_mask_path"] = e.ground_truth_mask_path->generic_string();
    entries.push_back(std::move(item));
  }
  return json{{"entries", entries}}.dump(2) + "\n";
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  const std::string text = manifest_to_json(manifest);
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::map<int, FeatureTensor> load_entry_tensors(const DatasetManifest& manifest, const ManifestEntry& entry) {
  std::map<int, FeatureTensor> out;
  for (const auto& [scale, rel] : entry.tensor_paths) {
    FeatureTensor t = read_tensor(manifest.resolve(rel));
    t.set_scale_id(scale);
    out.emplace(scale, std::move(t));
  }
  return out;
}

}  // namespace cpr
