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

#include <gtest/gtest.h>

#include <set>

#include "cpr/errors.hpp"
#include "cpr/worker_pool.hpp"
#include "test_util.hpp"

namespace cpr {
namespace {

std::vector<std::vector<double>> rows_of(const PatchMatrix& m) {
  std::vector<std::vector<double>> out;
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r;
    for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    out.push_back(std::move(r));
  }
  return out;
}

PatchMatrix random_points(Rng& rng, Index n, Index d) {
  PatchMatrix x(n, d);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(standard_normal(rng));
  return x;
}

TEST(KMeansTest, TwoSeparatedPairs) {
  PatchMatrix x(4, 2);
  x << 0, 0, 0, 1, 10, 0, 10, 1;
  const Codebook cb = kmeans_fit(x, 2, 0);
  ASSERT_EQ(cb.n_clusters(), 2);
  std::set<std::pair<float, float>> got;
  for (Index k = 0; k < 2; ++k) got.emplace(cb.centers(k, 0), cb.centers(k, 1));
  EXPECT_EQ(got, (std::set<std::pair<float, float>>{{0.0f, 0.5f}, {10.0f, 0.5f}}));
}

TEST(KMeansTest, SingleClusterIsMean) {
  Rng rng(1);
  const PatchMatrix x = random_points(rng, 37, 5);
  const Codebook cb = kmeans_fit(x, 1, 9);
  const Eigen::RowVectorXd mean = x.cast<double>().colwise().mean();
  for (Index j = 0; j < 5; ++j) EXPECT_NEAR(cb.centers(0, j), mean(j), 1e-6);
}

TEST(KMeansTest, BeatsRandomCenterSubsets) {
  Rng rng(2024);
  const PatchMatrix x = random_points(rng, 200, 8);
  const Codebook cb = kmeans_fit(x, 12, 7);
  const auto pts = rows_of(x);
  const double fitted = oracle::inertia(pts, rows_of(cb.centers));
  EXPECT_NEAR(inertia(x, cb.centers), fitted, 1e-6 * fitted);

  std::mt19937_64 pick(99);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::size_t> idx(pts.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), pick);
    std::vector<std::vector<double>> centers;
    for (int k = 0; k < 12; ++k) centers.push_back(pts[idx[static_cast<std::size_t>(k)]]);
    ASSERT_LE(fitted, oracle::inertia(pts, centers)) << "trial " << trial;
  }
}

TEST(KMeansTest, InertiaNeverIncreasesAndFitIsDeterministic) {
  Rng rng(5);
  const PatchMatrix x = random_points(rng, 300, 4);
  KMeansReport report;
  const Codebook a = kmeans_fit(x, 6, 123, {}, &report);
  ASSERT_FALSE(report.inertia.empty());
  for (std::size_t i = 1; i < report.inertia.size(); ++i) {
    EXPECT_LE(report.inertia[i], report.inertia[i - 1] * (1 + 1e-9));
  }
  WorkerPool pool(4);
  const Codebook b = kmeans_fit(x, 6, 123, {}, nullptr, &pool);
  EXPECT_EQ(a.centers, b.centers);
  EXPECT_EQ(a.rng_seed, 123u);
}

TEST(KMeansTest, RejectsTooFewDistinctVectors) {
  PatchMatrix x(5, 2);
  x << 1, 1, 1, 1, 2, 2, 2, 2, 1, 1;
  EXPECT_THROW(kmeans_fit(x, 3, 0), ArgumentError);
  EXPECT_NO_THROW(kmeans_fit(x, 2, 0));
  EXPECT_THROW(kmeans_fit(x, 0, 0), ArgumentError);
}

TEST(CodebookTest, ValidateRejectsDuplicateCenters) {
  Codebook cb;
  cb.centers = PatchMatrix(2, 2);
  cb.centers << 1, 2, 1, 2;
  EXPECT_THROW(cb.validate(), ValidationError);
  cb.centers(1, 1) = 3;
  EXPECT_NO_THROW(cb.validate());
}

Codebook tie_codebook() {
  Codebook cb;
  cb.centers = PatchMatrix(3, 2);
  cb.centers << 5, 5, 1, 0, -1, 0;
  return cb;
}

TEST(AssignCodesTest, EveryVectorAtCenterThree) {
  Rng rng(8);
  Codebook cb;
  cb.centers = random_points(rng, 5, 4);
  FeatureTensor t(3, 3, 4);
  for (Index i = 0; i < t.num_patches(); ++i) t.patches().row(i) = cb.centers.row(3);
  EXPECT_TRUE((assign_codes(t, cb).array() == 3).all());
}

TEST(AssignCodesTest, TieGoesToLowerIndex) {
  FeatureTensor t(1, 1, 2);
  EXPECT_EQ(assign_codes(t, tie_codebook())(0, 0), 1);
}

TEST(AssignCodesTest, MatchesExhaustiveScan) {
  Rng rng(12);
  Codebook cb;
  cb.centers = random_points(rng, 7, 8);
  const FeatureTensor t = testing::random_tensor(rng, 5, 5, 8);
  const CodeMap codes = assign_codes(t, cb);
  const auto centers = rows_of(cb.centers);
  const auto vectors = rows_of(t.patches());
  for (Index r = 0; r < 5; ++r)
    for (Index c = 0; c < 5; ++c) EXPECT_EQ(codes(r, c), oracle::nearest(centers, vectors[r * 5 + c]));
}

TEST(BowHistogramTest, Examples) {
  const Codebook cb = tie_codebook();  // N_C = 3
  PatchMatrix near0(4, 2);
  near0 << 5, 5, 4, 5, 6, 6, 5, 4;
  EXPECT_EQ(bow_histogram(near0, cb), Eigen::Vector3f(1, 0, 0));

  PatchMatrix split(4, 2);
  split << 5, 5, -1, 0, 4, 6, -2, 0;
  EXPECT_EQ(bow_histogram(split, cb), Eigen::Vector3f(0.5f, 0, 0.5f));
}

TEST(BowHistogramTest, RandomBlockMatchesCountedCodes) {
  Rng rng(4);
  Codebook cb;
  cb.centers = random_points(rng, 6, 3);
  const FeatureTensor t = testing::random_tensor(rng, 4, 5, 3);
  const BowHistogram h = bow_histogram(t.patches(), cb);
  const auto centers = rows_of(cb.centers);
  std::vector<double> counts(6, 0.0);
  for (const auto& v : rows_of(t.patches())) counts[static_cast<std::size_t>(oracle::nearest(centers, v))] += 1;
  for (Index k = 0; k < 6; ++k) EXPECT_FLOAT_EQ(h(k), static_cast<float>(counts[static_cast<std::size_t>(k)] / 20.0));
  EXPECT_NEAR(h.sum(), 1.0f, 1e-6f);
}

TEST(BlockPartitionTest, EvenDivision) {
  const auto blocks = block_partition(FeatureTensor(10, 10, 2), 5);
  ASSERT_EQ(blocks.size(), 25u);
  for (const auto& b : blocks) EXPECT_EQ(b.rows(), 4);
}

TEST(BlockPartitionTest, FloorBoundariesOnSevenBySeven) {
  const auto bounds = block_bounds(7, 7, 5);
  std::vector<Index> heights;
  for (Index u = 0; u < 5; ++u) heights.push_back(bounds[static_cast<std::size_t>(u * 5)].rows());
  // Boundaries floor(u * 7 / 5) = 0, 1, 2, 4, 5, 7.
  EXPECT_EQ(heights, (std::vector<Index>{1, 1, 2, 1, 2}));
}

TEST(BlockPartitionTest, BlocksTileTheGrid) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const Index h = 1 + static_cast<Index>(uniform_index(rng, 20));
    const Index w = 1 + static_cast<Index>(uniform_index(rng, 20));
    const Index s = 1 + static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(std::min(h, w))));
    RowMatrix<int> hits = RowMatrix<int>::Zero(h, w);
    for (const auto& b : block_bounds(h, w, s)) {
      EXPECT_GT(b.rows(), 0);
      EXPECT_GT(b.cols(), 0);
      hits.block(b.row_begin, b.col_begin, b.rows(), b.cols()).array() += 1;
    }
    EXPECT_TRUE((hits.array() == 1).all()) << h << "x" << w << " S=" << s;
  }
}

TEST(BlockPartitionTest, BlockRowsArePatchVectorsInOrder) {
  Rng rng(3);
  const FeatureTensor t = testing::random_tensor(rng, 7, 6, 2);
  const auto blocks = block_partition(t, 3);
  const auto bounds = block_bounds(7, 6, 3);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Index row = 0;
    for (Index r = bounds[i].row_begin; r < bounds[i].row_end; ++r)
      for (Index c = bounds[i].col_begin; c < bounds[i].col_end; ++c) EXPECT_EQ(blocks[i].row(row++), t.patch(r, c));
  }
}

TEST(BlockPartitionTest, GridSmallerThanSIsRejected) {
  EXPECT_THROW(block_bounds(4, 10, 5), ArgumentError);
  EXPECT_THROW(block_bounds(10, 10, 0), ArgumentError);
}

}  // namespace
}  // namespace cpr
