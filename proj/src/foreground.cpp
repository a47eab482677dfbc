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

#include "cpr/foreground.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "cpr/errors.hpp"
#include "cpr/local_retrieval.hpp"

namespace cpr {

void RegionSpec::validate() const {
  if (!(border_frac > 0.0 && border_frac < 0.5)) {
    throw ArgumentError("border_frac must lie in (0, 0.5)");
  }
  if (!(center_frac > 0.0 && center_frac < 1.0)) {
    throw ArgumentError("center_frac must lie in (0, 1)");
  }
  if (!(border_frac < (1.0 - center_frac) / 2.0)) {
    throw ArgumentError("border band and center box overlap");
  }
}

RegionGeometry region_geometry(const RegionSpec& spec, Index height, Index width) {
  spec.validate();
  RegionGeometry g;
  g.height = height;
  g.width = width;
  g.border_rows = std::max<Index>(1, static_cast<Index>(std::floor(spec.border_frac * static_cast<double>(height))));
  g.border_cols = std::max<Index>(1, static_cast<Index>(std::floor(spec.border_frac * static_cast<double>(width))));
  const Index center_h = std::max<Index>(1, std::lround(spec.center_frac * static_cast<double>(height)));
  const Index center_w = std::max<Index>(1, std::lround(spec.center_frac * static_cast<double>(width)));
  g.center_row_begin = (height - center_h) / 2;
  g.center_row_end = g.center_row_begin + center_h;
  g.center_col_begin = (width - center_w) / 2;
  g.center_col_end = g.center_col_begin + center_w;
  if (g.center_row_begin < g.border_rows || g.center_row_end > height - g.border_rows ||
      g.center_col_begin < g.border_cols || g.center_col_end > width - g.border_cols) {
    throw ArgumentError("grid " + std::to_string(height) + "x" + std::to_string(width) +
                        " too small to separate border band and center box");
  }
  return g;
}

std::size_t PseudoLabelSet::count(PatchLabel label) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [&](const PseudoLabel& s) { return s.label == label; }));
}

PseudoLabelSet pseudo_labels(const CodeMap& codes, const RegionSpec& region, Index n_clusters, std::string image_id) {
  const RegionGeometry g = region_geometry(region, codes.rows(), codes.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_clusters), 0);
  for (Index r = 0; r < g.height; ++r)
    for (Index c = 0; c < g.width; ++c) {
      if (!g.in_border(r, c)) continue;
      const auto code = codes(r, c);
      if (code < 0 || code >= n_clusters) {
        throw ArgumentError("code " + std::to_string(code) + " outside [0, " + std::to_string(n_clusters) + ")");
      }
      ++counts[static_cast<std::size_t>(code)];
    }
  PseudoLabelSet out;
  out.image_id = std::move(image_id);
  out.majority_code = static_cast<std::int32_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());

  for (Index r = 0; r < g.height; ++r)
    for (Index c = 0; c < g.width; ++c) {
      if (g.in_border(r, c) && codes(r, c) == out.majority_code) {
        out.samples.push_back({{r, c}, PatchLabel::kBackground});
      }
    }
  std::size_t positives = 0;
  for (Index r = g.center_row_begin; r < g.center_row_end; ++r)
    for (Index c = g.center_col_begin; c < g.center_col_end; ++c) {
      if (codes(r, c) != out.majority_code) {
        out.samples.push_back({{r, c}, PatchLabel::kForeground});
        ++positives;
      }
    }
  out.center_empty = positives == 0;
  return out;
}

void LinearForegroundModel::validate() const {
  if (weights.size() == 0) {
    throw ValidationError("foreground model has no weights");
  }
  if (!weights.allFinite() || !std::isfinite(bias)) {
    throw ValidationError("foreground model has non-finite parameters");
  }
}

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logistic_loss(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b) {
  const Eigen::VectorXd logits = (z * w).array() + b;
  double loss = 0.0;
  for (Index i = 0; i < logits.size(); ++i) loss += y[i] > 0.5 ? softplus(-logits[i]) : softplus(logits[i]);
  return loss / static_cast<double>(logits.size());
}

}  // namespace

LinearForegroundModel train_foreground(std::span<const FeatureTensor> raw_tensors,
                                       std::span<const PseudoLabelSet> labels,
                                       const ForegroundTrainOptions& options, ForegroundTrainReport* report) {
  if (raw_tensors.size() != labels.size()) {
    throw ArgumentError("one pseudo-label set is required per tensor");
  }
  if (raw_tensors.empty()) {
    throw TrainingError("FEB degenerate; disable FEB (no training images)");
  }
  const Index dim = raw_tensors.front().channels();
  std::size_t n = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (raw_tensors[i].channels() != dim) {
      throw ShapeError("foreground training tensors differ in channel count");
    }
    n += labels[i].samples.size();
    positives += labels[i].count(PatchLabel::kForeground);
  }
  if (positives == 0 || positives == n) {
    throw TrainingError("FEB degenerate; disable FEB (pseudo-labels contain a single class)");
  }

  Eigen::MatrixXd x(static_cast<Index>(n), dim);
  Eigen::VectorXd y(static_cast<Index>(n));
  Index k = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const FeatureTensor& t = raw_tensors[i];
    for (const auto& s : labels[i].samples) {
      if (s.coord.row < 0 || s.coord.row >= t.height() || s.coord.col < 0 || s.coord.col >= t.width()) {
        throw ArgumentError("pseudo-label coordinate outside its tensor");
      }
      x.row(k) = t.patch(s.coord.row, s.coord.col).cast<double>();
      y[k] = s.label == PatchLabel::kForeground ? 1.0 : 0.0;
      ++k;
    }
  }

  const Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::RowVectorXd stddev = ((x.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Index j = 0; j < dim; ++j)
    if (!(stddev[j] > 1e-12)) stddev[j] = 1.0;
  const Eigen::MatrixXd z = (x.rowwise() - mean).array().rowwise() / stddev.array();

  // Gradient of the mean logistic loss is Lipschitz with constant at most
  // sum_i (|z_i|^2 + 1) / (4n); a step of 1/L guarantees monotone descent.
  const double lipschitz = (z.rowwise().squaredNorm().array() + 1.0).sum() / (4.0 * static_cast<double>(n));
  const double step = std::min(options.learning_rate, 1.0 / lipschitz);

  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
  double b = 0.0;
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(options.epochs) + 1);
  losses.push_back(logistic_loss(z, y, w, b));
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const Eigen::VectorXd logits = (z * w).array() + b;
    Eigen::VectorXd residual(logits.size());
    for (Index i = 0; i < logits.size(); ++i) residual[i] = sigmoid(logits[i]) - y[i];
    const Eigen::VectorXd grad_w = z.transpose() * residual / static_cast<double>(n);
    const double grad_b = residual.mean();
    w -= step * grad_w;
    b -= step * grad_b;
    const double loss = logistic_loss(z, y, w, b);
    if (loss > losses.back() + 1e-6) {
      throw StateError("foreground training loss increased at epoch " + std::to_string(epoch));
    }
    losses.push_back(loss);
  }

  LinearForegroundModel model;
  const Eigen::VectorXd w_raw = w.array() / stddev.transpose().array();
  model.weights = w_raw.cast<float>();
  model.bias = static_cast<float>(b - mean.dot(w_raw));
  model.validate();
  if (report) {
    report->loss = std::move(losses);
    report->step_size = step;
    report->positives = positives;
    report->negatives = n - positives;
  }
  return model;
}

ScoreGrid predict_foreground(const FeatureTensor& raw, const LinearForegroundModel& model) {
  if (raw.channels() != model.weights.size()) {
    throw ArgumentError("tensor has " + std::to_string(raw.channels()) + " channels, foreground model expects " +
                        std::to_string(model.weights.size()));
  }
  const Eigen::VectorXf logits = raw.patches() * model.weights;
  ScoreGrid out(raw.height(), raw.width());
  for (Index i = 0; i < logits.size(); ++i) {
    out.data()[i] = static_cast<float>(sigmoid(static_cast<double>(logits[i]) + model.bias));
  }
  return out;
}

ScoreGrid fuse_foreground(const ScoreGrid& f_tst, std::span<const ScoreGrid> f_neighbors) {
  ScoreGrid out = f_tst;
  for (const auto& f : f_neighbors) {
    if (f.rows() != out.rows() || f.cols() != out.cols()) {
      throw ShapeError("foreground maps differ in shape");
    }
    out = out.cwiseMax(f);
  }
  return out;
}

ScoreGrid fuse_foreground(const ScoreGrid& f_tst, const std::vector<ScoreGrid>& reference_maps,
                          std::span<const Index> neighbor_ids) {
  ScoreGrid out = f_tst;
  for (Index id : neighbor_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= reference_maps.size()) {
      throw ArgumentError("neighbor id outside the reference foreground maps");
    }
    const ScoreGrid& f = reference_maps[static_cast<std::size_t>(id)];
    if (f.rows() != out.rows() || f.cols() != out.cols()) {
      throw ShapeError("foreground maps differ in shape");
    }
    out = out.cwiseMax(f);
  }
  return out;
}

ScoreGrid apply_foreground(const ScoreGrid& a_mul, const ScoreGrid& f_star) {
  if (a_mul.rows() > f_star.rows() || a_mul.cols() > f_star.cols()) {
    throw ShapeError("anomaly map is larger than the foreground map");
  }
  if (a_mul.rows() == f_star.rows() && a_mul.cols() == f_star.cols()) {
    return a_mul.cwiseProduct(f_star);
  }
  return upsample(a_mul, f_star.rows(), f_star.cols()).cwiseProduct(f_star);
}

}  // namespace cpr
