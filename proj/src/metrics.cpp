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

#include "cpr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "cpr/errors.hpp"

namespace cpr {

namespace {

void check_finite(std::span<const ScoredSample> samples) {
  for (const auto& s : samples)
    if (!std::isfinite(s.score)) throw ValidationError("non-finite score");
}

std::vector<std::size_t> order_by_score(std::span<const ScoredSample> samples, bool descending) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return descending ? samples[a].score > samples[b].score : samples[a].score < samples[b].score;
  });
  return order;
}

void check_mask(const ScoreGrid& mask) {
  for (Index i = 0; i < mask.size(); ++i) {
    const float v = mask.data()[i];
    if (v != 0.0f && v != 1.0f) throw ValidationError("ground-truth mask is not strictly binary");
  }
}

}  // namespace

double auroc(std::span<const ScoredSample> samples) {
  check_finite(samples);
  const auto order = order_by_score(samples, false);
  double pairs = 0.0;  // doubled count: 2 per win, 1 per tie
  double positives = 0.0;
  double negatives_below = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double pos = 0.0;
    double neg = 0.0;
    while (j < order.size() && samples[order[j]].score == samples[order[i]].score) {
      (samples[order[j]].positive ? pos : neg) += 1.0;
      ++j;
    }
    pairs += pos * (2.0 * negatives_below + neg);
    negatives_below += neg;
    positives += pos;
    i = j;
  }
  if (positives == 0.0 || negatives_below == 0.0) {
    throw UndefinedMetricError("AUROC is undefined without both positive and negative samples");
  }
  return pairs / (2.0 * positives * negatives_below);
}

double average_precision(std::span<const ScoredSample> samples) {
  check_finite(samples);
  const double total_pos =
      static_cast<double>(std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.positive; }));
  if (total_pos == 0.0) throw UndefinedMetricError("average precision is undefined without positive samples");
  const auto order = order_by_score(samples, true);
  double tp = 0.0;
  double fp = 0.0;
  double prev_recall = 0.0;
  double ap = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && samples[order[j]].score == samples[order[i]].score) {
      (samples[order[j]].positive ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

RowMatrix<int> label_components(const ScoreGrid& mask, Connectivity connectivity, int* count) {
  RowMatrix<int> labels = RowMatrix<int>::Constant(mask.rows(), mask.cols(), -1);
  int next = 0;
  std::vector<std::pair<Index, Index>> stack;
  const bool eight = connectivity == Connectivity::kEight;
  for (Index r = 0; r < mask.rows(); ++r)
    for (Index c = 0; c < mask.cols(); ++c) {
      if (mask(r, c) == 0.0f || labels(r, c) >= 0) continue;
      labels(r, c) = next;
      stack.push_back({r, c});
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        for (Index dy = -1; dy <= 1; ++dy)
          for (Index dx = -1; dx <= 1; ++dx) {
            if ((dy == 0 && dx == 0) || (!eight && dy != 0 && dx != 0)) continue;
            const Index ny = y + dy;
            const Index nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= mask.rows() || nx >= mask.cols()) continue;
            if (mask(ny, nx) == 0.0f || labels(ny, nx) >= 0) continue;
            labels(ny, nx) = next;
            stack.push_back({ny, nx});
          }
      }
      ++next;
    }
  if (count) *count = next;
  return labels;
}

double pro_score(std::span<const PixelEvalPair> pairs, double fpr_limit, Connectivity connectivity) {
  if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) throw ArgumentError("fpr_limit must lie in (0, 1]");
  if (pairs.empty()) throw ArgumentError("PRO needs at least one map");

  struct Pixel {
    float value;
    int region;  // -1 for ground-truth negatives
  };
  std::vector<Pixel> pixels;
  std::vector<double> region_size;
  double negatives = 0.0;
  for (const auto& p : pairs) {
    if (p.anomaly_map.rows() != p.ground_truth.rows() || p.anomaly_map.cols() != p.ground_truth.cols()) {
      throw ShapeError("anomaly map and ground truth differ in shape");
    }
    if (!p.anomaly_map.allFinite()) throw ValidationError("anomaly map has non-finite values");
    check_mask(p.ground_truth);
    int n = 0;
    const RowMatrix<int> labels = label_components(p.ground_truth, connectivity, &n);
    const int offset = static_cast<int>(region_size.size());
    region_size.resize(region_size.size() + static_cast<std::size_t>(n), 0.0);
    for (Index i = 0; i < labels.size(); ++i) {
      const int l = labels.data()[i];
      if (l >= 0) {
        region_size[static_cast<std::size_t>(offset + l)] += 1.0;
        pixels.push_back({p.anomaly_map.data()[i], offset + l});
      } else {
        negatives += 1.0;
        pixels.push_back({p.anomaly_map.data()[i], -1});
      }
    }
  }
  if (region_size.empty()) throw UndefinedMetricError("PRO is undefined without anomalous regions");
  if (negatives == 0.0) throw UndefinedMetricError("PRO is undefined without negative pixels");

  std::sort(pixels.begin(), pixels.end(), [](const Pixel& a, const Pixel& b) { return a.value > b.value; });
  const double n_regions = static_cast<double>(region_size.size());

  // Walk thresholds from high to low; the curve starts at (0, 0).
  double fp = 0.0;
  double overlap_sum = 0.0;
  double prev_x = 0.0;
  double prev_y = 0.0;
  double area = 0.0;
  for (std::size_t i = 0; i < pixels.size();) {
    std::size_t j = i;
    while (j < pixels.size() && pixels[j].value == pixels[i].value) {
      if (pixels[j].region < 0) {
        fp += 1.0;
      } else {
        overlap_sum += 1.0 / region_size[static_cast<std::size_t>(pixels[j].region)];
      }
      ++j;
    }
    const double x = fp / negatives;
    // The running sum of 1/size can overshoot 1 by an ulp or two.
    const double y = std::min(1.0, overlap_sum / n_regions);
    if (x >= fpr_limit) {
      const double y_at = x > prev_x ? prev_y + (y - prev_y) * (fpr_limit - prev_x) / (x - prev_x) : y;
      area += (fpr_limit - prev_x) * (prev_y + y_at) / 2.0;
      return area / fpr_limit;
    }
    area += (x - prev_x) * (prev_y + y) / 2.0;
    prev_x = x;
    prev_y = y;
    i = j;
  }
  // Unreachable: the last threshold marks every pixel positive (FPR = 1).
  return area / fpr_limit;
}

MetricReport evaluate(std::span<const EvaluatedImage> images, double fpr_limit, Connectivity connectivity) {
  if (images.empty()) throw ArgumentError("nothing to evaluate");
  MetricReport report;
  std::vector<ScoredSample> image_samples;
  std::vector<ScoredSample> pixel_samples;
  std::vector<PixelEvalPair> pairs;
  const Index h = images.front().anomaly_map.rows();
  const Index w = images.front().anomaly_map.cols();
  for (const auto& img : images) {
    if (img.anomaly_map.rows() != h || img.anomaly_map.cols() != w) {
      throw ShapeError("anomaly maps of '" + img.image_id + "' differ in shape from the first image");
    }
    if (img.label == ImageLabel::kUnknown) {
      throw ArgumentError("image '" + img.image_id + "' has no normal/anomalous label");
    }
    const bool anomalous = img.label == ImageLabel::kAnomalous;
    image_samples.push_back({img.image_score, anomalous});
    PixelEvalPair pair;
    pair.anomaly_map = img.anomaly_map;
    if (img.ground_truth) {
      pair.ground_truth = *img.ground_truth;
    } else if (!anomalous) {
      pair.ground_truth = ScoreGrid::Zero(h, w);
    } else {
      throw ArgumentError("anomalous image '" + img.image_id + "' has no ground-truth mask");
    }
    if (pair.ground_truth.rows() != h || pair.ground_truth.cols() != w) {
      throw ShapeError("ground truth of '" + img.image_id + "' does not match its anomaly map");
    }
    check_mask(pair.ground_truth);
    for (Index i = 0; i < pair.anomaly_map.size(); ++i) {
      pixel_samples.push_back({pair.anomaly_map.data()[i], pair.ground_truth.data()[i] != 0.0f});
    }
    pairs.push_back(std::move(pair));
  }
  report.image_auroc = auroc(image_samples);
  report.pixel_auroc = auroc(pixel_samples);
  report.ap = average_precision(pixel_samples);
  report.pro = pro_score(pairs, fpr_limit, connectivity);
  for (const auto& s : image_samples) (s.positive ? report.image_positives : report.image_negatives) += 1;
  for (const auto& s : pixel_samples) (s.positive ? report.pixel_positives : report.pixel_negatives) += 1;
  return report;
}

std::string report_to_json(const MetricReport& r) {
  nlohmann::json doc = {{"image_auroc", r.image_auroc},
                        {"pixel_auroc", r.pixel_auroc},
                        {"pro", r.pro},
                        {"ap", r.ap},
                        {"counts",
                         {{"image_positives", r.image_positives},
                          {"image_negatives", r.image_negatives},
                          {"pixel_positives", r.pixel_positives},
                          {"pixel_negatives", r.pixel_negatives}}}};
  return doc.dump();
}

}  // namespace cpr
