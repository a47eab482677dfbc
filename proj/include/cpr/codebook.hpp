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
#include <vector>

#include "cpr/tensor.hpp"

namespace cpr {

class WorkerPool;

// N_C cluster centers over raw patch vectors, one per row.
struct Codebook {
  PatchMatrix centers;
  std::uint64_t rng_seed = 0;

  Index n_clusters() const noexcept { return centers.rows(); }
  Index dim() const noexcept { return centers.cols(); }

  // Throws ValidationError when centers are empty, non-finite or duplicated.
  void validate() const;
};

using CodeMap = RowMatrix<std::int32_t>;
using BowHistogram = Eigen::VectorXf;

struct KMeansOptions {
  int max_iterations = 100;
  double tolerance = 1e-4;  // stop when no center moves farther than this
};

struct KMeansReport {
  int iterations = 0;
  std::vector<double> inertia;  // after each assignment step
};

// Lloyd iterations from k-means++ seeding. Deterministic for a given seed.
Codebook kmeans_fit(const PatchMatrix& vectors, Index n_clusters, std::uint64_t seed,
                    const KMeansOptions& options = {}, KMeansReport* report = nullptr,
                    WorkerPool* pool = nullptr);

double inertia(const PatchMatrix& vectors, const PatchMatrix& centers);

// Index of the Euclidean-nearest center; ties go to the lowest index.
template <typename Derived>
Index nearest_center(const PatchMatrix& centers, const Eigen::MatrixBase<Derived>& v) {
  Index best = 0;
  float best_d = (centers.row(0) - v).squaredNorm();
  for (Index k = 1; k < centers.rows(); ++k) {
    const float d = (centers.row(k) - v).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

CodeMap assign_codes(const FeatureTensor& t, const Codebook& cb);

// Rows of `block` are patch vectors.
BowHistogram bow_histogram(const PatchMatrix& block, const Codebook& cb);

// L1-normalized histogram of a set of codes.
template <typename Derived>
BowHistogram code_histogram(const Eigen::DenseBase<Derived>& codes, Index n_clusters) {
  BowHistogram h = BowHistogram::Zero(n_clusters);
  for (Index i = 0; i < codes.rows(); ++i)
    for (Index j = 0; j < codes.cols(); ++j) h[codes(i, j)] += 1.0f;
  return h / static_cast<float>(codes.size());
}

struct BlockBounds {
  Index row_begin = 0;
  Index row_end = 0;
  Index col_begin = 0;
  Index col_end = 0;
  Index rows() const noexcept { return row_end - row_begin; }
  Index cols() const noexcept { return col_end - col_begin; }
};

// S x S floor-boundary tiling, block (u, v) at index u * S + v.
std::vector<BlockBounds> block_bounds(Index height, Index width, Index s);
std::vector<PatchMatrix> block_partition(const FeatureTensor& t, Index s);

}  // namespace cpr
