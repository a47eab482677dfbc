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

#include <cmath>
#include <string>
#include <vector>

#include "cpr/codebook.hpp"
#include "cpr/errors.hpp"

namespace cpr {

class WorkerPool;

inline constexpr double kDefaultKlEps = 1e-8;

// S x S grid of block histograms; row u * S + v holds block (u, v).
struct GlobalSignature {
  Index s = 0;
  RowMatrix<float> cells;

  Index n_clusters() const noexcept { return cells.cols(); }
  auto cell(Index u, Index v) const { return cells.row(u * s + v); }

  friend bool operator==(const GlobalSignature& a, const GlobalSignature& b) {
    return a.s == b.s && a.cells.rows() == b.cells.rows() && a.cells.cols() == b.cells.cols() &&
           a.cells == b.cells;
  }
};

GlobalSignature compute_signature(const FeatureTensor& t, const Codebook& cb, Index s);
GlobalSignature signature_from_codes(const CodeMap& codes, Index n_clusters, Index s);

// KL(smooth(h_ref) || smooth(h_tst)) with smooth(h) = (h + eps) / (1 + N * eps).
template <typename DerivedRef, typename DerivedTst>
double kl_divergence(const Eigen::MatrixBase<DerivedRef>& h_ref, const Eigen::MatrixBase<DerivedTst>& h_tst,
                     double eps = kDefaultKlEps) {
  if (h_ref.size() != h_tst.size()) {
    throw ArgumentError("histogram bin counts differ: " + std::to_string(h_ref.size()) + " vs " +
                        std::to_string(h_tst.size()));
  }
  if (!(eps > 0.0)) {
    throw ArgumentError("KL smoothing eps must be positive");
  }
  const double norm = 1.0 + static_cast<double>(h_ref.size()) * eps;
  double sum = 0.0;
  for (Index i = 0; i < h_ref.size(); ++i) {
    const double p = (static_cast<double>(h_ref.derived().coeff(i)) + eps) / norm;
    const double q = (static_cast<double>(h_tst.derived().coeff(i)) + eps) / norm;
    sum += p * std::log(p / q);
  }
  return sum < 0.0 ? 0.0 : sum;
}

// Per-block KL(ref block || test block), in block order.
Eigen::VectorXd block_divergences(const GlobalSignature& ref, const GlobalSignature& tst,
                                  double eps = kDefaultKlEps);

// Mean of the smallest size - tau values.
double truncated_mean(Eigen::VectorXd divergences, Index tau);

double global_distance(const GlobalSignature& ref, const GlobalSignature& tst, Index tau,
                       double eps = kDefaultKlEps);

// Reference signatures, index-aligned with the local feature banks.
struct GlobalIndex {
  std::vector<std::string> image_ids;
  std::vector<GlobalSignature> signatures;

  std::size_t size() const noexcept { return signatures.size(); }
  bool empty() const noexcept { return signatures.empty(); }
  void add(std::string image_id, GlobalSignature signature);
};

struct Neighbor {
  Index index = 0;
  double distance = 0.0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

using NeighborList = std::vector<Neighbor>;

// The k nearest references by global_distance, ascending, ties by lower index.
NeighborList top_k(const GlobalIndex& index, const GlobalSignature& query, Index k, Index tau,
                   double eps = kDefaultKlEps, WorkerPool* pool = nullptr);

}  // namespace cpr
