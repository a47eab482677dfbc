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

#include "cpr/model_io.hpp"

#include <nlohmann/json.hpp>
#include <string>
#include <zlib.h>

#include "byte_io.hpp"
#include "cpr/errors.hpp"

namespace cpr {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'C', 'P', 'R', 'M'};

std::vector<std::uint8_t> json_bytes(const json& doc) {
  const std::string s = doc.dump();
  return {s.begin(), s.end()};
}

json parse_json_section(std::span<const std::uint8_t> payload, const std::string& name) {
  try {
    return json::parse(payload.begin(), payload.end());
  } catch (const json::parse_error& e) {
    throw CorruptionError("section '" + name + "' is not valid JSON: " + e.what());
  }
}

// Stacks equally shaped grids vertically into one (N*H) x W x 1 tensor.
FeatureTensor stack_grids(const std::vector<ScoreGrid>& grids) {
  const Index h = grids.front().rows();
  const Index w = grids.front().cols();
  ScoreGrid all(h * static_cast<Index>(grids.size()), w);
  for (std::size_t i = 0; i < grids.size(); ++i) all.middleRows(static_cast<Index>(i) * h, h) = grids[i];
  return grid_to_tensor(all, 1);
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(n));
    offset += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> serialize_model(const CprModel& model) {
  model.validate();
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> sections;

  FeatureTensor centers(model.codebook.n_clusters(), 1, model.codebook.centers, 0);
  sections.emplace_back("codebook", encode_tensor(centers));

  json histograms = json::array();
  for (const auto& sig : model.global_index.signatures) {
    json cells = json::array();
    for (Index i = 0; i < sig.cells.size(); ++i) cells.push_back(sig.cells.data()[i]);
    histograms.push_back(std::move(cells));
  }
  sections.emplace_back("signatures", json_bytes({{"s", model.config.grid_s},
                                                  {"n_clusters", model.codebook.n_clusters()},
                                                  {"image_ids", model.global_index.image_ids},
                                                  {"histograms", histograms}}));

  for (const auto& [scale, bank] : model.banks) {
    PatchMatrix stacked(bank.height * static_cast<Index>(bank.size()) * bank.width, bank.channels);
    const Index per = bank.height * bank.width;
    for (std::size_t i = 0; i < bank.size(); ++i) stacked.middleRows(static_cast<Index>(i) * per, per) = bank.tensors[i];
    FeatureTensor t(bank.height * static_cast<Index>(bank.size()), bank.width, std::move(stacked), scale);
    sections.emplace_back("bank." + std::to_string(scale), encode_tensor(t));
  }

  if (model.feb) {
    std::vector<float> weights(model.feb->model.weights.data(),
                               model.feb->model.weights.data() + model.feb->model.weights.size());
    sections.emplace_back("feb", json_bytes({{"weights", weights},
                                             {"bias", model.feb->model.bias},
                                             {"map_height", model.feb->reference_maps.front().rows()},
                                             {"map_width", model.feb->reference_maps.front().cols()}}));
    sections.emplace_back("feb.maps", encode_tensor(stack_grids(model.feb->reference_maps)));
  }

  detail::ByteWriter w;
  w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
  w.u32(kModelFormatVersion);
  const std::string config = config_to_json(model.config);
  w.u32(static_cast<std::uint32_t>(config.size()));
  w.text(config);
  w.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, payload] : sections) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.text(name);
    w.u64(payload.size());
    w.raw(payload);
  }
  w.u32(crc32(w.bytes()));
  return w.release();
}

CprModel deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw FormatError(FormatErrorKind::kBadMagic, "not a CPRM model bundle");
  }
  if (bytes.size() < 12) throw CorruptionError("model bundle truncated");
  detail::ByteReader header(bytes.subspan(4, 4));
  const std::uint32_t version = header.u32();
  if (version != kModelFormatVersion) {
    throw VersionError("model bundle version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kModelFormatVersion) + ")");
  }
  const auto body = bytes.first(bytes.size() - 4);
  detail::ByteReader tail(bytes.last(4));
  if (crc32(body) != tail.u32()) throw CorruptionError("model bundle checksum mismatch");

  CprModel model;
  try {
    detail::ByteReader r(body.subspan(8));
    const auto config_text = r.take(r.u32());
    model.config = config_from_json({reinterpret_cast<const char*>(config_text.data()), config_text.size()});

    std::map<std::string, std::span<const std::uint8_t>> sections;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto name_bytes = r.take(r.u32());
      std::string name(name_bytes.begin(), name_bytes.end());
      const std::uint64_t len = r.u64();
      if (len > r.remaining()) throw CorruptionError("section '" + name + "' overruns the bundle");
      sections[name] = r.take(static_cast<std::size_t>(len));
    }
    if (r.remaining() != 0) throw CorruptionError("unexpected bytes after the last section");
    const auto section = [&](const std::string& name) {
      auto it = sections.find(name);
      if (it == sections.end()) throw CorruptionError("model bundle lacks section '" + name + "'");
      return it->second;
    };

    const FeatureTensor centers = decode_tensor(section("codebook"));
    model.codebook.centers = centers.patches();
    model.codebook.rng_seed = model.config.seed;

    const json sig = parse_json_section(section("signatures"), "signatures");
    const Index s = sig.at("s").get<Index>();
    const Index nc = sig.at("n_clusters").get<Index>();
    const auto ids = sig.at("image_ids").get<std::vector<std::string>>();
    const auto& hist = sig.at("histograms");
    if (hist.size() != ids.size()) throw CorruptionError("signature count differs from image id count");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto values = hist[i].get<std::vector<float>>();
      if (static_cast<Index>(values.size()) != s * s * nc) throw CorruptionError("signature has wrong size");
      GlobalSignature g;
      g.s = s;
      g.cells = Eigen::Map<const RowMatrix<float>>(values.data(), s * s, nc);
      model.global_index.add(ids[i], std::move(g));
    }
    const Index n_refs = static_cast<Index>(ids.size());
    if (n_refs == 0) throw CorruptionError("model bundle has no references");

    for (const auto& [name, payload] : sections) {
      if (name.rfind("bank.", 0) != 0) continue;
      const int scale = std::stoi(name.substr(5));
      const FeatureTensor stacked = decode_tensor(payload);
      if (stacked.height() % n_refs != 0) throw CorruptionError("bank '" + name + "' height not a multiple of N_R");
      const Index h = stacked.height() / n_refs;
      const Index per = h * stacked.width();
      LocalFeatureBank bank;
      bank.scale_id = scale;
      bank.normalized = true;
      bank.height = h;
      bank.width = stacked.width();
      bank.channels = stacked.channels();
      for (Index i = 0; i < n_refs; ++i) {
        PatchMatrix rows = stacked.patches().middleRows(i * per, per);
        std::vector<std::uint8_t> zero(static_cast<std::size_t>(per), 0);
        for (Index k = 0; k < per; ++k) zero[static_cast<std::size_t>(k)] = rows.row(k).squaredNorm() == 0.0f;
        bank.append(std::move(rows), std::move(zero));
      }
      model.banks.emplace(scale, std::move(bank));
    }

    if (sections.count("feb")) {
      const json feb = parse_json_section(section("feb"), "feb");
      ForegroundBranch branch;
      const auto weights = feb.at("weights").get<std::vector<float>>();
      branch.model.weights = Eigen::Map<const Eigen::VectorXf>(weights.data(), static_cast<Index>(weights.size()));
      branch.model.bias = feb.at("bias").get<float>();
      const Index mh = feb.at("map_height").get<Index>();
      const ScoreGrid maps = tensor_to_grid(decode_tensor(section("feb.maps")));
      if (maps.rows() != mh * n_refs) throw CorruptionError("foreground maps have the wrong height");
      for (Index i = 0; i < n_refs; ++i) branch.reference_maps.push_back(maps.middleRows(i * mh, mh));
      model.feb = std::move(branch);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("model bundle metadata malformed: ") + e.what());
  } catch (const FormatError& e) {
    throw CorruptionError(std::string("model bundle section malformed: ") + e.what());
  }
  try {
    model.validate();
  } catch (const ValidationError& e) {
    throw CorruptionError(std::string("model bundle inconsistent: ") + e.what());
  }
  return model;
}

void save_model(const CprModel& model, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_model(model));
}

CprModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file_bytes(path)); }

}  // namespace cpr
