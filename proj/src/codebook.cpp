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

#include "cpr/codebook.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "cpr/errors.hpp"
#include "cpr/random.hpp"
#include "cpr/worker_pool.hpp"

namespace cpr {

namespace {

using CentersD = RowMatrix<double>;

double squared_distance(const PatchMatrix& x, Index i, const CentersD& c, Index k) {
  return (x.row(i).cast<double>() - c.row(k)).squaredNorm();
}

// k-means++: first center uniform, then proportional to squared distance.
CentersD seed_centers(const PatchMatrix& x, Index k, Rng& rng) {
  const Index n = x.rows();
  CentersD centers(k, x.cols());
  centers.row(0) = x.row(static_cast<Index>(uniform_index(rng, n))).cast<double>();
  Eigen::VectorXd d2(n);
  for (Index i = 0; i < n; ++i) d2[i] = squared_distance(x, i, centers, 0);
  for (Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    if (!(total > 0.0)) {
      throw ArgumentError("fewer distinct vectors than clusters (" + std::to_string(c) + " < " +
                          std::to_string(k) + ")");
    }
    const double target = uniform01(rng) * total;
    double acc = 0.0;
    Index pick = -1;
    for (Index i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (acc > target) break;
    }
    centers.row(c) = x.row(pick).cast<double>();
    for (Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(x, i, centers, c));
  }
  return centers;
}

}  // namespace

void Codebook::validate() const {
  if (centers.rows() < 1 || centers.cols() < 1) {
    throw ValidationError("codebook is empty");
  }
  if (!centers.allFinite()) {
    throw ValidationError("codebook has non-finite centers");
  }
  for (Index a = 0; a < centers.rows(); ++a)
    for (Index b = a + 1; b < centers.rows(); ++b)
      if (centers.row(a) == centers.row(b)) {
        throw ValidationError("codebook centers " + std::to_string(a) + " and " + std::to_string(b) +
                              " are identical");
      }
}

double inertia(const PatchMatrix& vectors, const PatchMatrix& centers) {
  const CentersD c = centers.cast<double>();
  double total = 0.0;
  for (Index i = 0; i < vectors.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Index k = 0; k < c.rows(); ++k) best = std::min(best, squared_distance(vectors, i, c, k));
    total += best;
  }
  return total;
}

Codebook kmeans_fit(const PatchMatrix& x, Index n_clusters, std::uint64_t seed, const KMeansOptions& options,
                    KMeansReport* report, WorkerPool* pool) {
  const Index n = x.rows();
  if (n == 0 || x.cols() == 0) {
    throw ArgumentError("k-means needs at least one non-empty vector");
  }
  if (n_clusters < 1) {
    throw ArgumentError("n_clusters must be positive");
  }
  if (n < n_clusters) {
    throw ArgumentError("fewer vectors (" + std::to_string(n) + ") than clusters (" +
                        std::to_string(n_clusters) + ")");
  }
  if (!x.allFinite()) {
    throw ValidationError("k-means input has non-finite values");
  }

  Rng rng(seed);
  CentersD centers = seed_centers(x, n_clusters, rng);

  std::vector<Index> assignment(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd dist(n);
  double previous = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    parallel_for(pool, n, [&](Index begin, Index end) {
      for (Index i = begin; i < end; ++i) {
        Index best = 0;
        double best_d = squared_distance(x, i, centers, 0);
        for (Index k = 1; k < n_clusters; ++k) {
          const double d = squared_distance(x, i, centers, k);
          if (d < best_d) {
            best_d = d;
            best = k;
          }
        }
        assignment[static_cast<std::size_t>(i)] = best;
        dist[i] = best_d;
      }
    });
    const double current = dist.sum();
    if (report) report->inertia.push_back(current);
    if (current > previous * (1.0 + 1e-9) + 1e-12) {
      throw StateError("k-means inertia increased from " + std::to_string(previous) + " to " +
                       std::to_string(current));
    }
    previous = current;

    CentersD sums = CentersD::Zero(n_clusters, x.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_clusters);
    for (Index i = 0; i < n; ++i) {
      const Index k = assignment[static_cast<std::size_t>(i)];
      sums.row(k) += x.row(i).cast<double>();
      counts[k] += 1.0;
    }
    CentersD updated(n_clusters, x.cols());
    for (Index k = 0; k < n_clusters; ++k) {
      if (counts[k] > 0.0) {
        updated.row(k) = sums.row(k) / counts[k];
        continue;
      }
      // Empty cluster: move it onto the point currently worst served.
      Index far = 0;
      dist.maxCoeff(&far);
      updated.row(k) = x.row(far).cast<double>();
      dist[far] = 0.0;
    }
    const double movement = (updated - centers).rowwise().norm().maxCoeff();
    centers = std::move(updated);
    if (movement < options.tolerance) {
      ++iter;
      break;
    }
  }
  if (report) report->iterations = iter;

  Codebook cb;
  cb.centers = centers.cast<float>();
  cb.rng_seed = seed;
  cb.validate();
  return cb;
}

CodeMap assign_codes(const FeatureTensor& t, const Codebook& cb) {
  if (t.channels() != cb.dim()) {
    throw ArgumentError("tensor has " + std::to_string(t.channels()) + " channels, codebook expects " +
                        std::to_string(cb.dim()));
  }
  // Distances up to the |x|^2 term come from one product per tile. When the two
  // closest centers are too close to call in that form, fall back to the exact
  // comparison so the result always matches nearest_center.
  constexpr Index kTile = 256;
  const PatchMatrix& x = t.patches();
  const Eigen::VectorXf c_sq = cb.centers.rowwise().squaredNorm();
  const float c_sq_max = c_sq.maxCoeff();
  const Index k = cb.n_clusters();
  CodeMap codes(t.height(), t.width());
  RowMatrix<float> dots;
  Eigen::VectorXf x_sq;
  for (Index i0 = 0; i0 < x.rows(); i0 += kTile) {
    const Index n = std::min(kTile, x.rows() - i0);
    dots.noalias() = x.middleRows(i0, n) * cb.centers.transpose();
    x_sq = x.middleRows(i0, n).rowwise().squaredNorm();
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      float best_d = std::numeric_limits<float>::infinity();
      float second_d = std::numeric_limits<float>::infinity();
      for (Index j = 0; j < k; ++j) {
        const float d = c_sq[j] - 2.0f * dots(i, j);
        if (d < best_d) {
          second_d = best_d;
          best_d = d;
          best = j;
        } else if (d < second_d) {
          second_d = d;
        }
      }
      if (second_d - best_d <= 1e-4f * (x_sq[i] + c_sq_max)) best = nearest_center(cb.centers, x.row(i0 + i));
      codes.data()[i0 + i] = static_cast<std::int32_t>(best);
    }
  }
  return codes;
}

BowHistogram bow_histogram(const PatchMatrix& block, const Codebook& cb) {
  if (block.rows() == 0) {
    throw ArgumentError("cannot histogram an empty block");
  }
  if (block.cols() != cb.dim()) {
    throw ArgumentError("block vectors have " + std::to_string(block.cols()) + " channels, codebook expects " +
                        std::to_string(cb.dim()));
  }
  BowHistogram h = BowHistogram::Zero(cb.n_clusters());
  for (Index i = 0; i < block.rows(); ++i) h[nearest_center(cb.centers, block.row(i))] += 1.0f;
  return h / static_cast<float>(block.rows());
}

std::vector<BlockBounds> block_bounds(Index height, Index width, Index s) {
  if (s < 1) {
    throw ArgumentError("grid size must be positive");
  }
  if (s > height || s > width) {
    throw ArgumentError("grid size " + std::to_string(s) + " exceeds tensor grid " + std::to_string(height) +
                        "x" + std::to_string(width));
  }
  std::vector<BlockBounds> out;
  out.reserve(static_cast<std::size_t>(s * s));
  for (Index u = 0; u < s; ++u)
    for (Index v = 0; v < s; ++v)
      out.push_back({u * height / s, (u + 1) * height / s, v * width / s, (v + 1) * width / s});
  return out;
}

std::vector<PatchMatrix> block_partition(const FeatureTensor& t, Index s) {
  std::vector<PatchMatrix> blocks;
  for (const auto& b : block_bounds(t.height(), t.width(), s)) {
    PatchMatrix m(b.rows() * b.cols(), t.channels());
    Index k = 0;
    for (Index r = b.row_begin; r < b.row_end; ++r)
      for (Index c = b.col_begin; c < b.col_end; ++c) m.row(k++) = t.patch(r, c);
    blocks.push_back(std::move(m));
  }
  return blocks;
}

}  // namespace cpr
