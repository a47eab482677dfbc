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

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "cpr/errors.hpp"
#include "test_util.hpp"

namespace cpr {
namespace {

struct Samples {
  std::vector<ScoredSample> lib;
  std::vector<double> scores;
  std::vector<bool> labels;
  void add(double s, bool p) {
    lib.push_back({s, p});
    scores.push_back(s);
    labels.push_back(p);
  }
};

// Coarse scores make ties common.
Samples random_samples(Rng& rng, int n, int levels) {
  Samples s;
  for (int i = 0; i < n; ++i) {
    const bool pos = i < 2 ? i == 0 : uniform01(rng) < 0.4;
    const double score = static_cast<double>(uniform_index(rng, static_cast<std::uint64_t>(levels))) + (pos ? 1.0 : 0.0);
    s.add(score, pos);
  }
  return s;
}

TEST(AurocTest, SeparatedAndInverted) {
  Samples s;
  for (int i = 0; i < 5; ++i) s.add(10 + i, true);
  for (int i = 0; i < 7; ++i) s.add(i, false);
  EXPECT_EQ(auroc(s.lib), 1.0);
  for (auto& x : s.lib) x.positive = !x.positive;
  EXPECT_EQ(auroc(s.lib), 0.0);
}

TEST(AurocTest, AllTiedIsOneHalf) {
  Samples s;
  for (int i = 0; i < 6; ++i) s.add(1.0, i % 2 == 0);
  EXPECT_EQ(auroc(s.lib), 0.5);
}

TEST(AurocTest, MatchesPairCounting) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Samples s = random_samples(rng, 50, 6);
    EXPECT_NEAR(auroc(s.lib), oracle::auroc(s.scores, s.labels), 1e-12);
  }
}

TEST(AurocTest, SingleClassIsUndefined) {
  Samples s;
  s.add(1, true);
  s.add(2, true);
  EXPECT_THROW(auroc(s.lib), UndefinedMetricError);
  EXPECT_THROW(auroc({}), UndefinedMetricError);
}

TEST(AveragePrecisionTest, PerfectRanking) {
  Samples s;
  for (int i = 0; i < 4; ++i) s.add(5 + i, true);
  for (int i = 0; i < 4; ++i) s.add(i, false);
  EXPECT_EQ(average_precision(s.lib), 1.0);
}

TEST(AveragePrecisionTest, SinglePositiveRankedLast) {
  for (int n : {1, 4, 9}) {
    Samples s;
    s.add(0.0, true);
    for (int i = 0; i < n; ++i) s.add(1.0 + i, false);
    EXPECT_NEAR(average_precision(s.lib), 1.0 / (n + 1), 1e-15);
  }
}

TEST(AveragePrecisionTest, MatchesThresholdSweep) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Samples s = random_samples(rng, 40, 8);
    EXPECT_NEAR(average_precision(s.lib), oracle::average_precision(s.scores, s.labels), 1e-12);
  }
}

TEST(AveragePrecisionTest, NoPositivesIsUndefined) {
  Samples s;
  s.add(1, false);
  EXPECT_THROW(average_precision(s.lib), UndefinedMetricError);
}

TEST(LabelComponentsTest, DiagonalConnectivity) {
  ScoreGrid m(3, 3);
  m << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  int count = 0;
  label_components(m, Connectivity::kEight, &count);
  EXPECT_EQ(count, 1);
  const RowMatrix<int> four = label_components(m, Connectivity::kFour, &count);
  EXPECT_EQ(count, 3);
  EXPECT_EQ(four(1, 0), -1);
}

TEST(LabelComponentsTest, MatchesBfsCount) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    ScoreGrid m(10, 12);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform01(rng) < 0.4 ? 1.0f : 0.0f;
    for (bool eight : {false, true}) {
      int expected = 0, got = 0;
      const auto ref = oracle::components(testing::to_oracle(m), eight, &expected);
      const auto lab = label_components(m, eight ? Connectivity::kEight : Connectivity::kFour, &got);
      EXPECT_EQ(got, expected);
      // Same partition: cells share a label in one iff they share it in the other.
      for (Index a = 0; a < m.size(); ++a)
        for (Index b = a + 1; b < m.size(); b += 7)
          EXPECT_EQ(lab.data()[a] == lab.data()[b], ref[static_cast<std::size_t>(a)] == ref[static_cast<std::size_t>(b)]);
    }
  }
}

PixelEvalPair box_pair(Index h, Index w, Index r0, Index c0, Index side) {
  PixelEvalPair p{ScoreGrid::Zero(h, w), ScoreGrid::Zero(h, w)};
  p.ground_truth.block(r0, c0, side, side).setOnes();
  return p;
}

TEST(ProScoreTest, PerfectPrediction) {
  auto p = box_pair(8, 8, 2, 3, 3);
  p.anomaly_map = p.ground_truth;
  const std::vector<PixelEvalPair> pairs = {p, box_pair(8, 8, 0, 0, 2)};
  std::vector<PixelEvalPair> perfect = pairs;
  perfect[1].anomaly_map = perfect[1].ground_truth;
  for (double limit : {0.01, 0.3, 1.0}) EXPECT_NEAR(pro_score(perfect, limit), 1.0, 1e-12);
}

TEST(ProScoreTest, ConstantMapTracesTheDiagonal) {
  auto p = box_pair(8, 8, 2, 3, 3);
  p.anomaly_map.setConstant(0.4f);
  const std::vector<PixelEvalPair> pairs = {p};
  // The curve jumps from (0, 0) to (1, 1); the area under y = x up to L,
  // divided by L, is L / 2.
  EXPECT_NEAR(pro_score(pairs, 1.0), 0.5, 1e-6);
  EXPECT_NEAR(pro_score(pairs, 0.3), 0.15, 1e-6);
}

TEST(ProScoreTest, MatchesPerThresholdOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PixelEvalPair> pairs;
    std::vector<oracle::Grid2> maps, masks;
    for (int i = 0; i < 2; ++i) {
      PixelEvalPair p{ScoreGrid(16, 16), ScoreGrid::Zero(16, 16)};
      for (Index k = 0; k < p.anomaly_map.size(); ++k)
        p.anomaly_map.data()[k] = static_cast<float>(uniform_index(rng, 40)) / 40.0f;
      for (int b = 0; b < 3; ++b) {
        const Index r = static_cast<Index>(uniform_index(rng, 13)), c = static_cast<Index>(uniform_index(rng, 13));
        p.ground_truth.block(r, c, 3, 4 - b % 2).setOnes();
      }
      maps.push_back(testing::to_oracle(p.anomaly_map));
      masks.push_back(testing::to_oracle(p.ground_truth));
      pairs.push_back(std::move(p));
    }
    for (double limit : {0.05, 0.3, 1.0}) {
      EXPECT_NEAR(pro_score(pairs, limit), oracle::pro(maps, masks, limit), 1e-6) << "trial " << trial;
    }
    EXPECT_NEAR(pro_score(pairs, 0.3, Connectivity::kFour), oracle::pro(maps, masks, 0.3, false), 1e-6);
  }
}

TEST(ProScoreTest, Errors) {
  auto p = box_pair(4, 4, 1, 1, 2);
  std::vector<PixelEvalPair> pairs = {p};
  EXPECT_THROW(pro_score({}, 0.3), ArgumentError);
  EXPECT_THROW(pro_score(pairs, 0.0), ArgumentError);
  pairs[0].ground_truth.setZero();
  EXPECT_THROW(pro_score(pairs, 0.3), UndefinedMetricError);
  pairs[0].ground_truth = ScoreGrid::Zero(3, 4);
  EXPECT_THROW(pro_score(pairs, 0.3), ShapeError);
}

EvaluatedImage image(const std::string& id, double score, ScoreGrid map, ImageLabel label,
                     std::optional<ScoreGrid> gt = std::nullopt) {
  return {id, score, std::move(map), label, std::move(gt)};
}

TEST(EvaluateTest, FieldsMatchStandaloneOperations) {
  Rng rng(5);
  std::vector<EvaluatedImage> images;
  std::vector<ScoredSample> img_samples, px_samples;
  std::vector<PixelEvalPair> pairs;
  for (int i = 0; i < 8; ++i) {
    const bool anomalous = i % 3 == 0;
    ScoreGrid map = testing::random_grid(rng, 6, 6);
    ScoreGrid gt = ScoreGrid::Zero(6, 6);
    if (anomalous) gt.block(1 + i % 3, 2, 2, 3).setOnes();
    const double score = uniform01(rng) + (anomalous ? 0.5 : 0.0);
    img_samples.push_back({score, anomalous});
    for (Index k = 0; k < 36; ++k) px_samples.push_back({map.data()[k], gt.data()[k] > 0.5f});
    pairs.push_back({map, gt});
    images.push_back(image("i" + std::to_string(i), score, map, anomalous ? ImageLabel::kAnomalous : ImageLabel::kNormal,
                           anomalous || i % 2 ? std::optional<ScoreGrid>(gt) : std::nullopt));
  }
  const MetricReport r = evaluate(images);
  EXPECT_EQ(r.image_auroc, auroc(img_samples));
  EXPECT_EQ(r.pixel_auroc, auroc(px_samples));
  EXPECT_EQ(r.ap, average_precision(px_samples));
  EXPECT_EQ(r.pro, pro_score(pairs, 0.3));
  EXPECT_EQ(r.image_positives, 3u);
  EXPECT_EQ(r.image_negatives, 5u);
  EXPECT_EQ(r.pixel_positives, 18u);

  const auto j = nlohmann::json::parse(report_to_json(r));
  EXPECT_EQ(j.at("image_auroc").get<double>(), r.image_auroc);
  EXPECT_EQ(j.at("pro").get<double>(), r.pro);
  EXPECT_EQ(j.at("counts").at("image_positives").get<int>(), 3);
}

TEST(EvaluateTest, DisjointScoresGiveOne) {
  std::vector<EvaluatedImage> images;
  ScoreGrid gt = ScoreGrid::Zero(4, 4);
  gt(1, 1) = 1;
  images.push_back(image("n", 0.1, ScoreGrid::Zero(4, 4), ImageLabel::kNormal));
  images.push_back(image("a", 0.9, gt, ImageLabel::kAnomalous, gt));
  const MetricReport r = evaluate(images);
  EXPECT_EQ(r.image_auroc, 1.0);
  EXPECT_EQ(r.pixel_auroc, 1.0);
  EXPECT_EQ(r.ap, 1.0);
  EXPECT_NEAR(r.pro, 1.0, 1e-12);
}

TEST(EvaluateTest, Errors) {
  EXPECT_THROW(evaluate({}), ArgumentError);
  ScoreGrid gt = ScoreGrid::Zero(4, 4);
  gt(0, 0) = 1;
  std::vector<EvaluatedImage> images = {image("n", 0, gt, ImageLabel::kNormal),
                                        image("a", 1, gt, ImageLabel::kAnomalous)};
  EXPECT_THROW(evaluate(images), ArgumentError);  // anomalous without mask
  images[1].ground_truth = gt;
  images[0].label = ImageLabel::kUnknown;
  EXPECT_THROW(evaluate(images), ArgumentError);
  images[0].label = ImageLabel::kAnomalous;
  images[0].ground_truth = gt;
  EXPECT_THROW(evaluate(images), UndefinedMetricError);  // one image class
}

}  // namespace
}  // namespace cpr
