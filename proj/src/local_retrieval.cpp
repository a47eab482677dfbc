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

#include "cpr/local_retrieval.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "cpr/worker_pool.hpp"

namespace cpr {

void RetrievalWindow::validate(Index height, Index width) const {
  if (size < 1 || size % 2 == 0) {
    throw ArgumentError("retrieval window must be a positive odd size, got " + std::to_string(size));
  }
  if (size > 2 * std::max(height, width) - 1) {
    throw ArgumentError("retrieval window " + std::to_string(size) + " exceeds the " + std::to_string(height) + "x" +
                        std::to_string(width) + " grid");
  }
}

std::vector<std::uint8_t> normalize_rows(PatchMatrix& rows) {
  std::vector<std::uint8_t> zero(static_cast<std::size_t>(rows.rows()), 0);
  for (Index i = 0; i < rows.rows(); ++i) {
    const double n = rows.row(i).cast<double>().norm();
    if (n == 0.0) {
      zero[static_cast<std::size_t>(i)] = 1;
      continue;
    }
    rows.row(i) = (rows.row(i).cast<double>() / n).cast<float>();
  }
  return zero;
}

LocalFeatureBank LocalFeatureBank::build(int scale_id, std::span<const FeatureTensor> tensors, bool normalize) {
  LocalFeatureBank bank;
  bank.scale_id = scale_id;
  bank.normalized = normalize;
  for (const auto& t : tensors) bank.add(t);
  return bank;
}

void LocalFeatureBank::add(const FeatureTensor& t) {
  if (tensors.empty()) {
    height = t.height();
    width = t.width();
    channels = t.channels();
  } else if (t.height() != height || t.width() != width || t.channels() != channels) {
    throw ShapeError("bank tensor shape " + std::to_string(t.height()) + "x" + std::to_string(t.width()) + "x" +
                     std::to_string(t.channels()) + " differs from " + std::to_string(height) + "x" +
                     std::to_string(width) + "x" + std::to_string(channels));
  }
  PatchMatrix rows = t.patches();
  std::vector<std::uint8_t> zero;
  if (normalized) {
    zero = normalize_rows(rows);
  } else {
    zero.assign(static_cast<std::size_t>(rows.rows()), 0);
    for (Index i = 0; i < rows.rows(); ++i) zero[static_cast<std::size_t>(i)] = rows.row(i).squaredNorm() == 0.0f;
  }
  append(std::move(rows), std::move(zero));
}

PlanarMatrix to_planar(const PatchMatrix& rows, Index height, Index width) {
  const Index ch = rows.cols();
  PlanarMatrix out(width, height * ch);
  for (Index r = 0; r < height; ++r) {
    for (Index k = 0; k < ch; ++k) out.col(r * ch + k) = rows.col(k).segment(r * width, width);
  }
  return out;
}

void LocalFeatureBank::append(PatchMatrix rows, std::vector<std::uint8_t> zero) {
  if (uses_planar()) planar.push_back(to_planar(rows, height, width));
  tensors.push_back(std::move(rows));
  zero_rows.push_back(std::move(zero));
}

namespace {

// best[j] = min(best[j], 1 - <q_j, r_j>) for kCells consecutive cells. Each
// cell is its own accumulator, so wide blocks keep several FMA chains busy.
template <Index kCells>
void min_block(const float* q, const float* r, Index channels, Index stride, float* best) {
  float acc[kCells] = {};
  for (Index k = 0; k < channels; ++k, q += stride, r += stride) {
    for (Index j = 0; j < kCells; ++j) acc[j] += q[j] * r[j];
  }
  for (Index j = 0; j < kCells; ++j) best[j] = std::min(best[j], 1.0f - acc[j]);
}

// Window search over a row-planar bank, folding one neighbor at a time into
// the running minimum in out. For a fixed (reference row, column offset) the
// candidates of a whole query row are a contiguous run per channel, so blocks
// of cells accumulate their dot products in registers. Zero rows of a
// normalized bank stay zero, so their distance comes out as 1 unmasked.
void planar_rows(const PlanarMatrix& q, const PlanarMatrix& ref, Index height, Index channels, Index rad,
                 Index row_begin, Index row_end, ScoreGrid& out) {
  const Index w = q.rows();
  const Index crad = std::min(rad, w - 1);
  for (Index r = row_begin; r < row_end; ++r) {
    float* best = out.data() + r * w;
    const float* qrow = q.data() + r * channels * w;
    const Index r0 = std::max<Index>(0, r - rad);
    const Index r1 = std::min<Index>(height - 1, r + rad);
    for (Index rr = r0; rr <= r1; ++rr) {
      for (Index dc = -crad; dc <= crad; ++dc) {
        const Index cb = std::max<Index>(0, -dc);
        const Index ce = std::min(w, w - dc);
        const float* rrow = ref.data() + rr * channels * w + dc;
        Index j0 = cb;
        for (; j0 + 64 <= ce; j0 += 64) min_block<64>(qrow + j0, rrow + j0, channels, w, best + j0);
        for (; j0 + 16 <= ce; j0 += 16) min_block<16>(qrow + j0, rrow + j0, channels, w, best + j0);
        if (j0 < ce && ce - cb >= 16) {
          // Overlapping last block; taking the min twice is harmless.
          j0 = ce - 16;
          min_block<16>(qrow + j0, rrow + j0, channels, w, best + j0);
        } else {
          for (; j0 < ce; ++j0) min_block<1>(qrow + j0, rrow + j0, channels, w, best + j0);
        }
      }
    }
  }
}

// Same search on row-major storage, one dot product per candidate.
void row_major_rows(const PatchMatrix& q, const LocalFeatureBank& bank, std::size_t id, Index rad, Index row_begin,
                    Index row_end, ScoreGrid& out) {
  const Index h = bank.height;
  const Index w = bank.width;
  const PatchMatrix& ref = bank.tensors[id];
  const auto& zero = bank.zero_rows[id];
  for (Index r = row_begin; r < row_end; ++r) {
    const Index r0 = std::max<Index>(0, r - rad);
    const Index r1 = std::min<Index>(h - 1, r + rad);
    for (Index c = 0; c < w; ++c) {
      const Index c0 = std::max<Index>(0, c - rad);
      const Index c1 = std::min<Index>(w - 1, c + rad);
      const auto qv = q.row(r * w + c);
      float best = out(r, c);
      for (Index rr = r0; rr <= r1; ++rr) {
        for (Index cc = c0; cc <= c1; ++cc) {
          const Index bi = rr * w + cc;
          float d;
          if (zero[static_cast<std::size_t>(bi)]) {
            d = 1.0f;
          } else if (bank.normalized) {
            d = 1.0f - qv.dot(ref.row(bi));
          } else {
            d = static_cast<float>(1.0 - cosine_similarity(qv, ref.row(bi)));
          }
          best = std::min(best, d);
        }
      }
      out(r, c) = best;
    }
  }
}

}  // namespace

LocalMatch local_nn(const FeatureTensor& query, const LocalFeatureBank& bank, std::span<const Index> neighbor_ids,
                    RetrievalWindow window, WorkerPool* pool) {
  if (neighbor_ids.empty()) {
    throw ArgumentError("local_nn needs at least one neighbor");
  }
  if (query.height() != bank.height || query.width() != bank.width || query.channels() != bank.channels) {
    throw ShapeError("query tensor " + std::to_string(query.height()) + "x" + std::to_string(query.width()) + "x" +
                     std::to_string(query.channels()) + " does not match bank " + std::to_string(bank.height) + "x" +
                     std::to_string(bank.width) + "x" + std::to_string(bank.channels));
  }
  for (Index id : neighbor_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= bank.size()) {
      throw ArgumentError("neighbor id " + std::to_string(id) + " outside bank of " + std::to_string(bank.size()));
    }
  }
  window.validate(bank.height, bank.width);

  const Index h = bank.height;
  const Index w = bank.width;
  const Index rad = window.radius();

  const PatchMatrix& raw = query.patches();
  std::vector<std::uint8_t> q_zero(static_cast<std::size_t>(raw.rows()), 0);
  std::vector<double> q_inv(static_cast<std::size_t>(raw.rows()), 0.0);
  for (Index i = 0; i < raw.rows(); ++i) {
    const double n = raw.row(i).cast<double>().norm();
    q_inv[static_cast<std::size_t>(i)] = n == 0.0 ? 0.0 : 1.0 / n;
    q_zero[static_cast<std::size_t>(i)] = n == 0.0;
  }

  PatchMatrix q = raw;
  if (bank.normalized) {
    for (Index i = 0; i < q.rows(); ++i) {
      q.row(i) = (q.row(i).cast<double>() * q_inv[static_cast<std::size_t>(i)]).cast<float>();
    }
  }
  PlanarMatrix qp;
  if (bank.uses_planar()) qp = to_planar(q, h, w);

  // Neighbors are the outer loop inside each band of rows so the window rows of
  // one reference stay in cache while the band is scored against it.
  LocalMatch result;
  result.map.setConstant(h, w, std::numeric_limits<float>::infinity());
  constexpr Index kBand = 8;
  parallel_for(pool, h, [&](Index row_begin, Index row_end) {
    for (Index b0 = row_begin; b0 < row_end; b0 += kBand) {
      const Index b1 = std::min(row_end, b0 + kBand);
      for (Index id : neighbor_ids) {
        const auto i = static_cast<std::size_t>(id);
        if (bank.uses_planar()) {
          planar_rows(qp, bank.planar[i], h, bank.channels, rad, b0, b1, result.map);
        } else {
          row_major_rows(q, bank, i, rad, b0, b1, result.map);
        }
      }
    }
  });
  // Zero query vectors score 1 whatever they are compared with.
  for (Index i = 0; i < h * w; ++i) {
    if (q_zero[static_cast<std::size_t>(i)]) result.map(i / w, i % w) = 1.0f;
  }
  result.map = result.map.cwiseMax(0.0f).cwiseMin(2.0f);
  for (auto z : q_zero) result.zero_norm_cells += z;
  return result;
}

ScoreGrid aggregate_scales(std::span<const ScoreGrid> maps, Index out_h, Index out_w) {
  if (maps.empty()) {
    throw ArgumentError("aggregate_scales needs at least one map");
  }
  ScoreGrid sum = ScoreGrid::Zero(out_h, out_w);
  for (const auto& m : maps) sum += upsample(m, out_h, out_w);
  return sum;
}

}  // namespace cpr
