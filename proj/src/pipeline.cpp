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

#include "cpr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>

#include "cpr/errors.hpp"
#include "cpr/random.hpp"
#include "cpr/worker_pool.hpp"

namespace cpr {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSubsampleSalt = 0x9e3779b97f4a7c15ULL;

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

std::string shape_string(const FeatureTensor& t) {
  return std::to_string(t.height()) + "x" + std::to_string(t.width()) + "x" + std::to_string(t.channels());
}

}  // namespace

void CprConfig::validate() const {
  if (k_neighbors < 1) throw ArgumentError("k_neighbors must be at least 1");
  if (grid_s < 1) throw ArgumentError("grid_s must be at least 1");
  if (n_clusters < 1) throw ArgumentError("n_clusters must be at least 1");
  if (tau < 0 || tau >= grid_s * grid_s) throw ArgumentError("tau must lie in [0, grid_s^2)");
  if (top_t < 1) throw ArgumentError("top_t must be at least 1");
  if (!(kl_eps > 0.0)) throw ArgumentError("kl_eps must be positive");
  if (windows.empty()) throw ArgumentError("at least one retrieval window is required");
  for (const auto& [scale, w] : windows) {
    if (w < 1 || w % 2 == 0) {
      throw ArgumentError("window for scale " + std::to_string(scale) + " must be a positive odd size");
    }
  }
  region.validate();
  if (feb_training.epochs < 0) throw ArgumentError("feb_epochs must be non-negative");
  if (!(feb_training.learning_rate > 0.0)) throw ArgumentError("feb_lr must be positive");
  if (codebook_cap < static_cast<std::size_t>(n_clusters)) throw ArgumentError("codebook_cap below n_clusters");
}

Index CprConfig::window_for(int scale_id) const {
  auto it = windows.find(scale_id);
  if (it == windows.end()) {
    throw ArgumentError("no retrieval window configured for scale " + std::to_string(scale_id));
  }
  return it->second;
}

bool operator==(const CprConfig& a, const CprConfig& b) { return config_to_json(a) == config_to_json(b); }

std::string config_to_json(const CprConfig& c) {
  json windows = json::object();
  for (const auto& [scale, w] : c.windows) windows[std::to_string(scale)] = w;
  json doc = {{"k_neighbors", c.k_neighbors},
              {"grid_s", c.grid_s},
              {"n_clusters", c.n_clusters},
              {"tau", c.tau},
              {"top_t", c.top_t},
              {"windows", windows},
              {"feb_enabled", c.feb_enabled},
              {"kl_eps", c.kl_eps},
              {"seed", c.seed},
              {"region", {{"border_frac", c.region.border_frac}, {"center_frac", c.region.center_frac}}},
              {"feb_epochs", c.feb_training.epochs},
              {"feb_lr", c.feb_training.learning_rate},
              {"codebook_cap", c.codebook_cap}};
  return doc.dump();
}

CprConfig config_from_json(std::string_view text, const CprConfig& base) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ArgumentError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ArgumentError("config must be a JSON object");
  static const std::set<std::string> known = {"k_neighbors", "grid_s",      "n_clusters", "tau",
                                              "top_t",       "windows",     "feb_enabled", "kl_eps",
                                              "seed",        "region",      "feb_epochs",  "feb_lr",
                                              "codebook_cap"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw ArgumentError("unknown config key '" + key + "'");
  }
  CprConfig c = base;
  try {
    if (doc.contains("k_neighbors")) c.k_neighbors = doc["k_neighbors"].get<Index>();
    if (doc.contains("grid_s")) c.grid_s = doc["grid_s"].get<Index>();
    if (doc.contains("n_clusters")) c.n_clusters = doc["n_clusters"].get<Index>();
    if (doc.contains("tau")) c.tau = doc["tau"].get<Index>();
    if (doc.contains("top_t")) c.top_t = doc["top_t"].get<Index>();
    if (doc.contains("windows")) {
      c.windows.clear();
      for (const auto& [scale, w] : doc["windows"].items()) c.windows[std::stoi(scale)] = w.get<Index>();
    }
    if (doc.contains("feb_enabled")) c.feb_enabled = doc["feb_enabled"].get<bool>();
    if (doc.contains("kl_eps")) c.kl_eps = doc["kl_eps"].get<double>();
    if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("region")) {
      const auto& r = doc["region"];
      c.region.border_frac = r.value("border_frac", c.region.border_frac);
      c.region.center_frac = r.value("center_frac", c.region.center_frac);
    }
    if (doc.contains("feb_epochs")) c.feb_training.epochs = doc["feb_epochs"].get<int>();
    if (doc.contains("feb_lr")) c.feb_training.learning_rate = doc["feb_lr"].get<double>();
    if (doc.contains("codebook_cap")) c.codebook_cap = doc["codebook_cap"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("malformed config: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ArgumentError("config window keys must be scale ids");
  }
  c.validate();
  return c;
}

void CprModel::validate() const {
  config.validate();
  codebook.validate();
  if (global_index.empty()) throw ValidationError("model has no references");
  if (!banks.count(1)) throw ValidationError("model has no scale-1 bank");
  for (const auto& [scale, bank] : banks) {
    if (bank.size() != global_index.size()) {
      throw ValidationError("bank " + std::to_string(scale) + " holds " + std::to_string(bank.size()) +
                            " tensors, global index holds " + std::to_string(global_index.size()));
    }
  }
  if (feb) {
    feb->model.validate();
    if (feb->reference_maps.size() != global_index.size()) {
      throw ValidationError("foreground map count differs from reference count");
    }
    if (feb->model.weights.size() != codebook.dim()) {
      throw ValidationError("foreground model width differs from scale-1 channels");
    }
  }
}

CprModel build_model(std::span<const ReferenceImage> refs, const CprConfig& config, BuildInfo* info,
                     WorkerPool* pool) {
  config.validate();
  if (refs.empty()) throw ArgumentError("cannot build a model from zero references");

  const auto& first = refs.front().tensors;
  if (!first.count(1)) throw ArgumentError("references must provide a scale-1 tensor");
  std::set<std::string> ids;
  for (const auto& ref : refs) {
    if (!ids.insert(ref.image_id).second) throw ArgumentError("duplicate image_id '" + ref.image_id + "'");
    if (ref.tensors.size() != first.size()) {
      throw ShapeError("reference '" + ref.image_id + "' does not provide every scale");
    }
    for (const auto& [scale, t] : ref.tensors) {
      auto it = first.find(scale);
      if (it == first.end()) throw ShapeError("reference '" + ref.image_id + "' has unexpected scale");
      if (!t.same_shape(it->second)) {
        throw ShapeError("reference '" + ref.image_id + "' scale " + std::to_string(scale) + " is " +
                         shape_string(t) + ", expected " + shape_string(it->second));
      }
      t.validate();
    }
  }
  for (const auto& [scale, t] : first) RetrievalWindow{config.window_for(scale)}.validate(t.height(), t.width());
  const FeatureTensor& proto = first.at(1);
  block_bounds(proto.height(), proto.width(), config.grid_s);

  BuildInfo local_info;
  BuildInfo& out_info = info ? *info : local_info;

  // Codebook over pooled scale-1 vectors, uniformly subsampled above the cap.
  const Index per_image = proto.num_patches();
  const Index pooled = per_image * static_cast<Index>(refs.size());
  std::vector<Index> rows(static_cast<std::size_t>(pooled));
  std::iota(rows.begin(), rows.end(), Index{0});
  if (static_cast<std::size_t>(pooled) > config.codebook_cap) {
    Rng rng(config.seed ^ kSubsampleSalt);
    const std::size_t keep = config.codebook_cap;
    for (std::size_t i = 0; i < keep; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, rows.size() - i));
      std::swap(rows[i], rows[j]);
    }
    rows.resize(keep);
    std::sort(rows.begin(), rows.end());
  }
  PatchMatrix pool_vectors(static_cast<Index>(rows.size()), proto.channels());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index img = rows[i] / per_image;
    pool_vectors.row(static_cast<Index>(i)) =
        refs[static_cast<std::size_t>(img)].tensors.at(1).patches().row(rows[i] % per_image);
  }
  KMeansReport km;
  CprModel model;
  model.config = config;
  model.codebook = kmeans_fit(pool_vectors, config.n_clusters, config.seed, {}, &km, pool);
  out_info.pooled_vectors = pooled;
  out_info.codebook_vectors = static_cast<Index>(rows.size());
  out_info.kmeans_iterations = km.iterations;

  std::vector<CodeMap> codes;
  codes.reserve(refs.size());
  for (const auto& ref : refs) {
    codes.push_back(assign_codes(ref.tensors.at(1), model.codebook));
    model.global_index.add(ref.image_id, signature_from_codes(codes.back(), config.n_clusters, config.grid_s));
  }

  for (const auto& [scale, t] : first) {
    LocalFeatureBank bank;
    bank.scale_id = scale;
    bank.normalized = true;
    for (const auto& ref : refs) bank.add(ref.tensors.at(scale));
    model.banks.emplace(scale, std::move(bank));
  }

  if (config.feb_enabled) {
    try {
      region_geometry(config.region, proto.height(), proto.width());
      std::vector<PseudoLabelSet> labels;
      std::vector<FeatureTensor> raws;
      labels.reserve(refs.size());
      raws.reserve(refs.size());
      for (std::size_t i = 0; i < refs.size(); ++i) {
        labels.push_back(pseudo_labels(codes[i], config.region, config.n_clusters, refs[i].image_id));
        if (labels.back().center_empty) {
          out_info.warnings.push_back("foreground: center box of '" + refs[i].image_id +
                                      "' holds only the majority code; image contributes negatives only");
        }
        raws.push_back(refs[i].tensors.at(1));
      }
      ForegroundTrainReport report;
      ForegroundBranch branch;
      branch.model = train_foreground(raws, labels, config.feb_training, &report);
      for (const auto& raw : raws) branch.reference_maps.push_back(predict_foreground(raw, branch.model));
      model.feb = std::move(branch);
      out_info.feb_report = std::move(report);
    } catch (const TrainingError& e) {
      out_info.warnings.push_back(std::string("foreground branch disabled: ") + e.what());
    } catch (const ArgumentError& e) {
      out_info.warnings.push_back(std::string("foreground branch disabled: ") + e.what());
    }
  }
  model.validate();
  return model;
}

CprModel build_model(const DatasetManifest& manifest, const CprConfig& config, BuildInfo* info, WorkerPool* pool) {
  std::vector<ReferenceImage> refs;
  refs.reserve(manifest.entries.size());
  for (const auto& entry : manifest.entries) {
    if (entry.label != ImageLabel::kNormal) {
      throw ArgumentError("reference '" + entry.image_id + "' is labeled " + std::string(to_string(entry.label)) +
                          "; models are built from normal images only");
    }
  }
  for (const auto& entry : manifest.entries) refs.push_back({entry.image_id, load_entry_tensors(manifest, entry)});
  return build_model(refs, config, info, pool);
}

CprModel without_reference(const CprModel& model, std::size_t index) {
  if (index >= model.size()) throw ArgumentError("reference index out of range");
  if (model.size() == 1) throw StateError("cannot remove the only reference");
  CprModel out = model;
  const auto at = [index](auto& v) { v.erase(v.begin() + static_cast<std::ptrdiff_t>(index)); };
  at(out.global_index.image_ids);
  at(out.global_index.signatures);
  for (auto& [_, bank] : out.banks) {
    at(bank.tensors);
    at(bank.zero_rows);
    if (!bank.planar.empty()) at(bank.planar);
  }
  if (out.feb) at(out.feb->reference_maps);
  return out;
}

std::vector<Index> DetectionResult::neighbor_ids() const {
  std::vector<Index> ids;
  ids.reserve(neighbors.size());
  for (const auto& n : neighbors) ids.push_back(n.index);
  return ids;
}

double image_score(const ScoreGrid& map, Index t) {
  if (t < 1) throw ArgumentError("top_t must be at least 1");
  std::vector<float> values(map.data(), map.data() + map.size());
  const auto keep = static_cast<std::size_t>(std::min<Index>(t, map.size()));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(keep - 1), values.end(),
                   std::greater<float>());
  // Sum in descending order so the result does not depend on the partition.
  std::sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(keep), std::greater<float>());
  double sum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) sum += values[i];
  return sum;
}

DetectionResult infer(const CprModel& model, const std::map<int, FeatureTensor>& query, WorkerPool* pool,
                      StageTimings* timings) {
  const auto start = std::chrono::steady_clock::now();
  for (const auto& [scale, t] : query) {
    if (!model.banks.count(scale)) {
      throw ShapeError("model has no bank for query scale " + std::to_string(scale));
    }
  }
  for (const auto& [scale, bank] : model.banks) {
    auto it = query.find(scale);
    if (it == query.end()) throw ShapeError("query is missing scale " + std::to_string(scale));
    const FeatureTensor& t = it->second;
    if (t.height() != bank.height || t.width() != bank.width || t.channels() != bank.channels) {
      throw ShapeError("query scale " + std::to_string(scale) + " is " + shape_string(t) + ", model expects " +
                       std::to_string(bank.height) + "x" + std::to_string(bank.width) + "x" +
                       std::to_string(bank.channels));
    }
  }
  const CprConfig& cfg = model.config;
  const FeatureTensor& q1 = query.at(1);

  DetectionResult result;
  auto stage = std::chrono::steady_clock::now();
  const GlobalSignature sig = compute_signature(q1, model.codebook, cfg.grid_s);
  result.neighbors = top_k(model.global_index, sig, cfg.k_neighbors, cfg.tau, cfg.kl_eps, pool);
  const std::vector<Index> ids = result.neighbor_ids();
  if (timings) timings->global_ms = elapsed_ms(stage);

  std::vector<ScoreGrid> maps;
  for (const auto& [scale, bank] : model.banks) {
    stage = std::chrono::steady_clock::now();
    LocalMatch m = local_nn(query.at(scale), bank, ids, RetrievalWindow{cfg.window_for(scale)}, pool);
    result.zero_norm_cells += m.zero_norm_cells;
    maps.push_back(m.map);
    result.per_scale_maps.emplace(scale, std::move(m.map));
    if (timings) timings->local_ms[scale] = elapsed_ms(stage);
  }

  stage = std::chrono::steady_clock::now();
  ScoreGrid a_mul = aggregate_scales(maps, q1.height(), q1.width());
  if (model.feb) {
    const ScoreGrid f_tst = predict_foreground(q1, model.feb->model);
    ScoreGrid f_star = fuse_foreground(f_tst, model.feb->reference_maps, ids);
    result.anomaly_map = apply_foreground(a_mul, f_star);
    result.foreground = std::move(f_star);
  } else {
    result.anomaly_map = std::move(a_mul);
  }
  result.image_score = image_score(result.anomaly_map, cfg.top_t);
  if (timings) {
    timings->fusion_ms = elapsed_ms(stage);
    timings->total_ms = elapsed_ms(start);
  }
  return result;
}

}  // namespace cpr
