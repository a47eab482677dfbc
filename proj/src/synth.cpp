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

#include "cpr/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "cpr/errors.hpp"
#include "cpr/random.hpp"

namespace cpr {

namespace {

constexpr int kWaves = 4;

struct Wave {
  double amplitude;
  double freq_r;
  double freq_c;
  double phase;
};

struct SharedField {
  Eigen::VectorXd background;
  Eigen::VectorXd object_mean;
  std::vector<std::vector<Wave>> waves;  // per channel
};

SharedField make_shared_field(Index channels, Rng& rng) {
  SharedField f;
  f.background.resize(channels);
  f.object_mean.resize(channels);
  for (Index c = 0; c < channels; ++c) f.background[c] = standard_normal(rng);
  for (Index c = 0; c < channels; ++c) f.object_mean[c] = standard_normal(rng);
  f.waves.resize(static_cast<std::size_t>(channels));
  for (auto& per_channel : f.waves) {
    for (int k = 0; k < kWaves; ++k) {
      per_channel.push_back({0.35 * standard_normal(rng), 0.5 + 2.0 * uniform01(rng), 0.5 + 2.0 * uniform01(rng),
                             2.0 * std::numbers::pi * uniform01(rng)});
    }
  }
  return f;
}

Index uniform_int(Rng& rng, Index lo, Index hi) {  // inclusive
  return lo + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

std::string image_name(const char* prefix, Index i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03d", prefix, static_cast<int>(i));
  return buf;
}

}  // namespace

void SynthOptions::validate() const {
  if (n_normal < 1) throw ArgumentError("n_normal must be at least 1");
  if (n_anomalous < 0) throw ArgumentError("n_anomalous must be non-negative");
  if (height < 8 || width < 8) throw ArgumentError("synthetic grids must be at least 8x8");
  if (channels < 1) throw ArgumentError("channels must be positive");
  if (jitter < 0 || jitter > std::min(height, width) / 8) throw ArgumentError("jitter too large for the grid");
  if (!(noise_sigma > 0.0)) throw ArgumentError("noise_sigma must be positive");
  if (!(defect_strength > 0.0)) throw ArgumentError("defect_strength must be positive");
  if (holdout >= n_normal) throw ArgumentError("holdout must leave at least one training normal");
}

SynthDataset generate_synthetic(const SynthOptions& options) {
  options.validate();
  Rng rng(options.seed);
  const Index h = options.height;
  const Index w = options.width;
  const Index ch = options.channels;
  const SharedField field = make_shared_field(ch, rng);

  // Object box: 70% of each side, centered.
  const double half_h = 0.35 * static_cast<double>(h);
  const double half_w = 0.35 * static_cast<double>(w);

  SynthDataset data;
  data.options = options;
  const Index total = options.n_normal + options.n_anomalous;
  for (Index i = 0; i < total; ++i) {
    const bool anomalous = i >= options.n_normal;
    SynthImage img;
    img.image_id = anomalous ? image_name("anomalous", i - options.n_normal) : image_name("normal", i);
    img.label = anomalous ? ImageLabel::kAnomalous : ImageLabel::kNormal;

    const Index dy = options.jitter ? uniform_int(rng, -options.jitter, options.jitter) : 0;
    const Index dx = options.jitter ? uniform_int(rng, -options.jitter, options.jitter) : 0;
    const double cy = 0.5 * static_cast<double>(h) + static_cast<double>(dy);
    const double cx = 0.5 * static_cast<double>(w) + static_cast<double>(dx);
    const Index obj_r0 = static_cast<Index>(std::ceil(cy - half_h));
    const Index obj_r1 = static_cast<Index>(std::floor(cy + half_h));
    const Index obj_c0 = static_cast<Index>(std::ceil(cx - half_w));
    const Index obj_c1 = static_cast<Index>(std::floor(cx + half_w));

    FeatureTensor clean(h, w, ch, 1);
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c) {
        const bool inside = r >= obj_r0 && r < obj_r1 && c >= obj_c0 && c < obj_c1;
        for (Index k = 0; k < ch; ++k) {
          double v = field.background[k];
          if (inside) {
            // Object-relative coordinates so the pattern moves with the object.
            const double u = (static_cast<double>(r) - cy) / half_h;
            const double t = (static_cast<double>(c) - cx) / half_w;
            v = field.object_mean[k];
            for (const Wave& wave : field.waves[static_cast<std::size_t>(k)]) {
              v += wave.amplitude * std::sin(wave.freq_r * u * std::numbers::pi + wave.freq_c * t * std::numbers::pi +
                                              wave.phase);
            }
          }
          clean(r, c, k) = static_cast<float>(v);
        }
      }
    img.normal_field = clean;

    FeatureTensor defective = clean;
    if (anomalous) {
      const Index rh = uniform_int(rng, std::max<Index>(2, h / 8), std::max<Index>(2, h / 4));
      const Index rw = uniform_int(rng, std::max<Index>(2, w / 8), std::max<Index>(2, w / 4));
      const Index r0 = uniform_int(rng, obj_r0 + 1, obj_r1 - 1 - rh);
      const Index c0 = uniform_int(rng, obj_c0 + 1, obj_c1 - 1 - rw);
      Eigen::VectorXd offset(ch);
      for (Index k = 0; k < ch; ++k) offset[k] = standard_normal(rng);
      offset *= options.defect_strength * options.noise_sigma * std::sqrt(static_cast<double>(ch)) / offset.norm();
      ScoreGrid mask = ScoreGrid::Zero(h, w);
      for (Index r = r0; r < r0 + rh; ++r)
        for (Index c = c0; c < c0 + rw; ++c) {
          mask(r, c) = 1.0f;
          for (Index k = 0; k < ch; ++k) defective(r, c, k) += static_cast<float>(offset[k]);
        }
      img.mask = std::move(mask);
    }

    FeatureTensor s1 = defective;
    for (Index i2 = 0; i2 < s1.patches().size(); ++i2) {
      s1.patches().data()[i2] += static_cast<float>(options.noise_sigma * standard_normal(rng));
    }
    img.tensors.emplace(1, std::move(s1));

    if (options.second_scale) {
      const Index h2 = (h + 1) / 2;
      const Index w2 = (w + 1) / 2;
      FeatureTensor s2(h2, w2, ch, 2);
      for (Index r = 0; r < h2; ++r)
        for (Index c = 0; c < w2; ++c) {
          Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(ch);
          double n = 0.0;
          for (Index rr = 2 * r; rr < std::min(h, 2 * r + 2); ++rr)
            for (Index cc = 2 * c; cc < std::min(w, 2 * c + 2); ++cc) {
              acc += defective.patch(rr, cc).cast<double>();
              n += 1.0;
            }
          acc /= n;
          for (Index k = 0; k < ch; ++k) acc[k] += options.noise_sigma * standard_normal(rng);
          s2.patch(r, c) = acc.cast<float>();
        }
      img.tensors.emplace(2, std::move(s2));
    }
    data.images.push_back(std::move(img));
  }
  return data;
}

SynthFiles write_synthetic(const SynthDataset& data, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw WriteError("cannot create " + out_dir.string() + ": " + ec.message());

  const Index holdout = data.options.holdout >= 0 ? data.options.holdout : data.options.n_normal / 4;
  const Index n_train = data.options.n_normal - holdout;

  DatasetManifest all;
  DatasetManifest train;
  DatasetManifest test;
  Index normal_index = 0;
  for (const auto& img : data.images) {
    ManifestEntry entry;
    entry.image_id = img.image_id;
    entry.label = img.label;
    for (const auto& [scale, t] : img.tensors) {
      const std::string name = img.image_id + "_s" + std::to_string(scale) + ".cprt";
      write_tensor(t, out_dir / name);
      entry.tensor_paths.emplace(scale, name);
    }
    if (img.mask) {
      const std::string name = img.image_id + "_mask.cprt";
      write_tensor(grid_to_tensor(*img.mask, 1), out_dir / name);
      entry.ground_truth_mask_path = name;
    }
    all.entries.push_back(entry);
    if (img.label == ImageLabel::kNormal && normal_index++ < n_train) {
      train.entries.push_back(entry);
    } else {
      test.entries.push_back(entry);
    }
  }
  SynthFiles files{out_dir / "manifest.json", out_dir / "train.json", out_dir / "test.json"};
  save_manifest(all, files.manifest);
  save_manifest(train, files.train);
  save_manifest(test, files.test);
  return files;
}

}  // namespace cpr
