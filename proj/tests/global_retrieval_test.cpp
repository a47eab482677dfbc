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

#include <gtest/gtest.h>

#include <numeric>

#include "cpr/errors.hpp"
#include "cpr/worker_pool.hpp"
#include "test_util.hpp"

namespace cpr {
namespace {

std::vector<double> as_vec(const Eigen::Ref<const Eigen::RowVectorXf>& h) {
  return std::vector<double>(h.data(), h.data() + h.size());
}

double oracle_distance(const GlobalSignature& ref, const GlobalSignature& tst, int tau, double eps = kDefaultKlEps) {
  std::vector<double> d;
  for (Index i = 0; i < ref.cells.rows(); ++i) d.push_back(oracle::kl(as_vec(ref.cells.row(i)), as_vec(tst.cells.row(i)), eps));
  return oracle::truncated_mean(d, tau);
}

GlobalSignature random_signature(Rng& rng, Index n_clusters = 6, Index s = 5, Index side = 10) {
  CodeMap codes(side, side);
  for (Index i = 0; i < codes.size(); ++i) codes.data()[i] = static_cast<std::int32_t>(uniform_index(rng, n_clusters));
  return signature_from_codes(codes, n_clusters, s);
}

TEST(KlDivergenceTest, IdenticalIsZero) {
  Eigen::VectorXf h(4);
  h << 0.1f, 0.2f, 0.3f, 0.4f;
  EXPECT_NEAR(kl_divergence(h, h), 0.0, 1e-9);
}

TEST(KlDivergenceTest, PointMassAgainstUniform) {
  const Eigen::Vector2f ref(1, 0);
  const Eigen::Vector2f tst(0.5f, 0.5f);
  EXPECT_NEAR(oracle::kl({1, 0}, {0.5, 0.5}, 1e-8), 0.693147, 1e-4);
  EXPECT_NEAR(kl_divergence(ref, tst, 1e-8), 0.693147, 1e-4);
}

TEST(KlDivergenceTest, Asymmetric) {
  const Eigen::Vector2f p(0.9f, 0.1f);
  const Eigen::Vector2f u(0.5f, 0.5f);
  // 0.9 ln 1.8 + 0.1 ln 0.2 versus 0.5 ln(5/9) + 0.5 ln 5.
  EXPECT_NEAR(kl_divergence(p, u), 0.368064, 1e-5);
  EXPECT_NEAR(kl_divergence(u, p), 0.510826, 1e-5);
  // Mirror-image pairs happen to be symmetric: both directions give 0.8 ln 9.
  const Eigen::Vector2f q(0.1f, 0.9f);
  EXPECT_NEAR(kl_divergence(p, q), kl_divergence(q, p), 1e-9);
  EXPECT_NEAR(kl_divergence(p, q), 1.757780, 1e-5);
}

TEST(KlDivergenceTest, MatchesOracleOnRandomHistograms) {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXf a(8), b(8);
    for (Index i = 0; i < 8; ++i) {
      a(i) = uniform01(rng) < 0.3 ? 0.0f : static_cast<float>(uniform01(rng));
      b(i) = uniform01(rng) < 0.3 ? 0.0f : static_cast<float>(uniform01(rng));
    }
    a /= std::max(a.sum(), 1e-6f);
    b /= std::max(b.sum(), 1e-6f);
    const double got = kl_divergence(a, b);
    EXPECT_GE(got, 0.0);
    EXPECT_NEAR(got, oracle::kl(as_vec(a.transpose()), as_vec(b.transpose()), kDefaultKlEps), 1e-9 * (1 + got));
  }
}

TEST(KlDivergenceTest, RejectsBadArguments) {
  EXPECT_THROW(kl_divergence(Eigen::Vector2f(1, 0), Eigen::Vector3f(1, 0, 0)), ArgumentError);
  EXPECT_THROW(kl_divergence(Eigen::Vector2f(1, 0), Eigen::Vector2f(1, 0), 0.0), ArgumentError);
}

TEST(TruncatedMeanTest, DropsTheLargest) {
  Eigen::VectorXd d(4);
  d << 0.3, 9.0, 0.1, 0.2;
  EXPECT_NEAR(truncated_mean(d, 1), 0.2, 1e-12);
  EXPECT_NEAR(truncated_mean(d, 3), 0.1, 1e-12);
  EXPECT_NEAR(truncated_mean(d, 0), 9.6 / 4, 1e-12);
  EXPECT_THROW(truncated_mean(d, 4), ArgumentError);
  EXPECT_THROW(truncated_mean(d, -1), ArgumentError);
}

TEST(SignatureTest, UniformTensorIsOneHotEverywhere) {
  Codebook cb;
  cb.centers = PatchMatrix(3, 2);
  cb.centers << 0, 0, 1, 1, 2, 2;
  FeatureTensor t(10, 10, 2);
  t.patches().setConstant(0.9f);
  const GlobalSignature sig = compute_signature(t, cb, 5);
  ASSERT_EQ(sig.cells.rows(), 25);
  for (Index i = 0; i < 25; ++i) EXPECT_EQ(sig.cells.row(i), Eigen::RowVector3f(0, 1, 0));
}

TEST(SignatureTest, SingleCellIsWholeHistogram) {
  Rng rng(6);
  Codebook cb;
  cb.centers = testing::random_tensor(rng, 5, 1, 4).patches();
  const FeatureTensor t = testing::random_tensor(rng, 6, 7, 4);
  const GlobalSignature sig = compute_signature(t, cb, 1);
  EXPECT_TRUE(sig.cells.row(0).transpose().isApprox(bow_histogram(t.patches(), cb)));
}

TEST(SignatureTest, CellsMatchHandBuiltBlocks) {
  Rng rng(10);
  const Index h = 9, w = 11, s = 4, n = 5;
  CodeMap codes(h, w);
  for (Index i = 0; i < codes.size(); ++i) codes.data()[i] = static_cast<std::int32_t>(uniform_index(rng, n));
  const GlobalSignature sig = signature_from_codes(codes, n, s);
  for (Index u = 0; u < s; ++u) {
    for (Index v = 0; v < s; ++v) {
      std::vector<double> counts(n, 0.0);
      double total = 0;
      for (Index r = u * h / s; r < (u + 1) * h / s; ++r)
        for (Index c = v * w / s; c < (v + 1) * w / s; ++c) {
          counts[static_cast<std::size_t>(codes(r, c))] += 1;
          total += 1;
        }
      for (Index k = 0; k < n; ++k) EXPECT_FLOAT_EQ(sig.cell(u, v)(k), static_cast<float>(counts[k] / total));
    }
  }
}

TEST(GlobalDistanceTest, IdenticalSignaturesAreZero) {
  Rng rng(1);
  const GlobalSignature a = random_signature(rng);
  for (Index tau = 0; tau < 25; ++tau) EXPECT_EQ(global_distance(a, a, tau), 0.0);
}

TEST(GlobalDistanceTest, MatchesOracleAndDegenerateTruncation) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const GlobalSignature a = random_signature(rng);
    const GlobalSignature b = random_signature(rng);
    EXPECT_NEAR(global_distance(a, b, 5), oracle_distance(a, b, 5), 1e-9);
    EXPECT_NEAR(global_distance(a, b, 24), block_divergences(a, b).minCoeff(), 1e-12);
  }
}

TEST(TopKTest, SelfQueryComesFirst) {
  Rng rng(3);
  GlobalIndex index;
  for (int i = 0; i < 12; ++i) index.add("r" + std::to_string(i), random_signature(rng));
  const NeighborList nn = top_k(index, index.signatures[7], 4, 5);
  ASSERT_EQ(nn.size(), 4u);
  EXPECT_EQ(nn[0].index, 7);
  EXPECT_EQ(nn[0].distance, 0.0);
}

TEST(TopKTest, MatchesFullSortOracle) {
  Rng rng(4);
  GlobalIndex index;
  for (int i = 0; i < 20; ++i) index.add(std::to_string(i), random_signature(rng));
  WorkerPool pool(3);
  for (int trial = 0; trial < 10; ++trial) {
    const GlobalSignature q = random_signature(rng);
    std::vector<std::pair<double, Index>> all;
    for (Index i = 0; i < 20; ++i) all.emplace_back(oracle_distance(index.signatures[i], q, 5), i);
    std::sort(all.begin(), all.end());
    for (Index k : {1, 5, 20, 30}) {
      const NeighborList got = top_k(index, q, k, 5, kDefaultKlEps, trial % 2 ? &pool : nullptr);
      ASSERT_EQ(got.size(), static_cast<std::size_t>(std::min<Index>(k, 20)));
      for (std::size_t j = 0; j < got.size(); ++j) {
        EXPECT_EQ(got[j].index, all[j].second);
        EXPECT_NEAR(got[j].distance, all[j].first, 1e-9);
      }
    }
  }
}

TEST(TopKTest, SmallerKIsAPrefix) {
  Rng rng(5);
  GlobalIndex index;
  // Repeated signatures force distance ties.
  for (int i = 0; i < 16; ++i) {
    if (i % 4 == 3) {
      index.add(std::to_string(i), index.signatures.back());
    } else {
      index.add(std::to_string(i), random_signature(rng));
    }
  }
  const GlobalSignature q = random_signature(rng);
  const NeighborList full = top_k(index, q, 16, 5);
  for (std::size_t j = 1; j < full.size(); ++j) {
    EXPECT_TRUE(full[j - 1].distance < full[j].distance ||
                (full[j - 1].distance == full[j].distance && full[j - 1].index < full[j].index));
  }
  for (Index k = 1; k <= 16; ++k) {
    const NeighborList part = top_k(index, q, k, 5);
    EXPECT_TRUE(std::equal(part.begin(), part.end(), full.begin()));
  }
}

TEST(TopKTest, Errors) {
  Rng rng(6);
  GlobalIndex index;
  EXPECT_THROW(top_k(index, random_signature(rng), 3, 5), StateError);
  index.add("a", random_signature(rng));
  EXPECT_THROW(index.add("a", random_signature(rng)), ArgumentError);
  EXPECT_THROW(index.add("b", random_signature(rng, 6, 3)), ShapeError);
  EXPECT_THROW(top_k(index, random_signature(rng), 0, 5), ArgumentError);
}

}  // namespace
}  // namespace cpr
