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

#include "cpr/global_retrieval.hpp"

#include <algorithm>
#include <numeric>

#include "cpr/worker_pool.hpp"

namespace cpr {

GlobalSignature signature_from_codes(const CodeMap& codes, Index n_clusters, Index s) {
  GlobalSignature sig;
  sig.s = s;
  const auto bounds = block_bounds(codes.rows(), codes.cols(), s);
  sig.cells.resize(s * s, n_clusters);
  for (std::size_t b = 0; b < bounds.size(); ++b) {
    const auto& blk = bounds[b];
    sig.cells.row(static_cast<Index>(b)) =
        code_histogram(codes.block(blk.row_begin, blk.col_begin, blk.rows(), blk.cols()), n_clusters).transpose();
  }
  return sig;
}

GlobalSignature compute_signature(const FeatureTensor& t, const Codebook& cb, Index s) {
  // Validate the grid first so the error names the grid rather than a block.
  block_bounds(t.height(), t.width(), s);
  return signature_from_codes(assign_codes(t, cb), cb.n_clusters(), s);
}

Eigen::VectorXd block_divergences(const GlobalSignature& ref, const GlobalSignature& tst, double eps) {
  if (ref.s != tst.s || ref.n_clusters() != tst.n_clusters() || ref.cells.rows() != tst.cells.rows()) {
    throw ArgumentError("signatures differ in grid size or cluster count");
  }
  Eigen::VectorXd d(ref.cells.rows());
  for (Index b = 0; b < ref.cells.rows(); ++b) d[b] = kl_divergence(ref.cells.row(b), tst.cells.row(b), eps);
  return d;
}

double truncated_mean(Eigen::VectorXd divergences, Index tau) {
  const Index n = divergences.size();
  if (tau < 0 || tau >= n) {
    throw ArgumentError("tau must lie in [0, " + std::to_string(n) + "), got " + std::to_string(tau));
  }
  std::sort(divergences.begin(), divergences.end());
  double sum = 0.0;
  for (Index i = 0; i < n - tau; ++i) sum += divergences[i];
  return sum / static_cast<double>(n - tau);
}

double global_distance(const GlobalSignature& ref, const GlobalSignature& tst, Index tau, double eps) {
  if (tau < 0 || tau >= ref.s * ref.s) {
    throw ArgumentError("tau must lie in [0, S^2)");
  }
  return truncated_mean(block_divergences(ref, tst, eps), tau);
}

void GlobalIndex::add(std::string image_id, GlobalSignature signature) {
  if (!signatures.empty() &&
      (signature.s != signatures.front().s || signature.n_clusters() != signatures.front().n_clusters())) {
    throw ShapeError("signature shape differs from the rest of the index");
  }
  if (std::find(image_ids.begin(), image_ids.end(), image_id) != image_ids.end()) {
    throw ArgumentError("duplicate image_id '" + image_id + "' in global index");
  }
  image_ids.push_back(std::move(image_id));
  signatures.push_back(std::move(signature));
}

NeighborList top_k(const GlobalIndex& index, const GlobalSignature& query, Index k, Index tau, double eps,
                   WorkerPool* pool) {
  if (index.empty()) {
    throw StateError("global index is empty");
  }
  if (k < 1) {
    throw ArgumentError("k must be at least 1");
  }
  const Index n = static_cast<Index>(index.size());
  NeighborList all(static_cast<std::size_t>(n));
  parallel_for(pool, n, [&](Index begin, Index end) {
    for (Index i = begin; i < end; ++i) {
      all[static_cast<std::size_t>(i)] = {i, global_distance(index.signatures[static_cast<std::size_t>(i)], query,
                                                             tau, eps)};
    }
  });
  const auto keep = static_cast<std::size_t>(std::min(k, n));
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
                    });
  all.resize(keep);
  return all;
}

}  // namespace cpr
