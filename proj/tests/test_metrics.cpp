/*
 * Copyright 2026 The Myna Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>

#include "metric_oracles.hpp"
#include "myna/error.hpp"
#include "myna/metrics.hpp"

namespace myna::metrics {
namespace {

TEST(Metrics, AucExamples) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8}, y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(*roc_auc(s, y), 0.75);
  EXPECT_DOUBLE_EQ(*roc_auc(std::vector<double>{1, 1, 1, 1}, y), 0.5);
  EXPECT_FALSE(roc_auc(s, std::vector<double>{1, 1, 1, 1}).has_value());
}

TEST(Metrics, ApExamples) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8}, y{0, 0, 1, 1};
  EXPECT_NEAR(*average_precision(s, y), (1.0 + 2.0 / 3.0) / 2.0, 1e-12);
  EXPECT_FALSE(average_precision(s, std::vector<double>{0, 0, 0, 0}).has_value());
}

TEST(Metrics, AucApMatchBruteForce) {
  Rng rng = derive_rng(1, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 20);
    auto [s, y] = testing::random_scored_labels(n, rng);
    const auto auc = roc_auc(s, y), ap = average_precision(s, y);
    const auto bauc = testing::brute_auc(s, y), bap = testing::brute_ap(s, y);
    ASSERT_EQ(auc.has_value(), bauc.has_value());
    ASSERT_EQ(ap.has_value(), bap.has_value());
    if (auc) EXPECT_NEAR(*auc, *bauc, 1e-9);
    if (ap) EXPECT_NEAR(*ap, *bap, 1e-9);
  }
}

TEST(Metrics, KeyScoreExamples) {
  // 0..11 major, 12..23 minor; C = 0, G = 7, A = 9.
  EXPECT_EQ(key_score(0, 0), 1.0);
  EXPECT_EQ(key_score(7, 0), 0.5);        // G major for C major
  EXPECT_EQ(key_score(0, 7), 0.0);        // fifth below
  EXPECT_EQ(key_score(12 + 9, 0), 0.3);   // A minor for C major
  EXPECT_EQ(key_score(0, 12 + 9), 0.3);   // C major for A minor
  EXPECT_EQ(key_score(12, 0), 0.2);       // C minor for C major
  EXPECT_EQ(key_score(12 + 7, 12), 0.5);  // G minor for C minor
  EXPECT_EQ(key_score(1, 0), 0.0);
  EXPECT_EQ(key_name(0), "C major");
  EXPECT_EQ(key_name(21), "A minor");
}

TEST(Metrics, KeyScoreMatchesBruteForce) {
  for (std::size_t e = 0; e < kNumKeys; ++e) {
    for (std::size_t r = 0; r < kNumKeys; ++r) EXPECT_EQ(key_score(e, r), testing::brute_key_score(e, r)) << e << " " << r;
  }
  Rng rng = derive_rng(2, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 20);
    std::vector<std::size_t> est(n), ref(n);
    for (std::size_t i = 0; i < n; ++i) {
      est[i] = static_cast<std::size_t>(uniform01(rng) * 24);
      ref[i] = static_cast<std::size_t>(uniform01(rng) * 24);
    }
    EXPECT_EQ(weighted_key_score(est, ref), testing::brute_weighted_key(est, ref));
  }
}

TEST(Metrics, R2MatchesBruteForce) {
  Rng rng = derive_rng(3, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(uniform01(rng) * 19);
    std::vector<double> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = std::round(uniform01(rng) * 8.0) / 4.0;
      p[i] = std::round(uniform01(rng) * 8.0) / 4.0;
    }
    EXPECT_EQ(r2_score(p, y), testing::brute_r2(p, y));
  }
  const std::vector<double> y{1, 2, 3};
  EXPECT_EQ(r2_score(y, y), 1.0);
  EXPECT_EQ(r2_score(std::vector<double>{2, 2, 2}, y), 0.0);
}

TEST(Metrics, AccuracyAndArgmax) {
  Matrix m{2, 3, {0.1, 0.7, 0.2, 0.5, 0.5, 0.0}};
  EXPECT_EQ(argmax_rows(m), (std::vector<std::size_t>{1, 0}));
  EXPECT_DOUBLE_EQ(accuracy(std::vector<std::size_t>{1, 0, 2}, std::vector<std::size_t>{1, 1, 2}), 2.0 / 3.0);
}

TEST(Metrics, MacroSkipsSingleClassTags) {
  Matrix s{4, 2, {0.9, 0.1, 0.2, 0.3, 0.8, 0.5, 0.1, 0.7}};
  Matrix y{4, 2, {1, 0, 0, 0, 1, 0, 0, 0}};
  const auto m = macro_auc_ap(s, y, false);
  EXPECT_EQ(m.tags_used, 1u);
  EXPECT_EQ(m.tags_skipped, 1u);
  EXPECT_DOUBLE_EQ(m.auc, 1.0);
}

TEST(Metrics, ComputeKeysPerTask) {
  Matrix logits{2, 2, {0.2, 0.8, 0.9, 0.1}}, cls{2, 1, {1, 1}};
  EXPECT_DOUBLE_EQ(compute(TaskKind::kMulticlass, logits, cls).at("accuracy"), 0.5);
  Matrix pred{2, 2, {1, 2, 3, 4}}, tgt{2, 2, {1, 2, 3, 4}};
  const auto r = compute(TaskKind::kRegression, pred, tgt);
  EXPECT_EQ(r.at("r2_arousal"), 1.0);
  EXPECT_EQ(r.at("r2_valence"), 1.0);
  EXPECT_EQ(r.at("r2"), 1.0);
  EXPECT_EQ(primary_metric(TaskKind::kMultilabel), "auc");
  EXPECT_EQ(primary_metric(TaskKind::kKey), "key_score");
  EXPECT_THROW(parse_task_kind("ranking"), ConfigError);
}

TEST(Metrics, LabelsAsPredictionsScoreTheMaximum) {
  Matrix tags{4, 2, {1, 0, 0, 1, 1, 1, 0, 0}};
  EXPECT_EQ(compute(TaskKind::kMultilabel, tags, tags).at("auc"), 1.0);
  EXPECT_EQ(compute(TaskKind::kMultilabel, tags, tags).at("ap"), 1.0);
  Matrix cls{3, 1, {2, 0, 1}}, onehot{3, 3, {0, 0, 1, 1, 0, 0, 0, 1, 0}};
  EXPECT_EQ(compute(TaskKind::kMulticlass, onehot, cls).at("accuracy"), 1.0);
  Matrix keys{2, 1, {5, 17}}, key_scores{2, 24, std::vector<double>(48, 0.0)};
  key_scores.data[5] = key_scores.data[24 + 17] = 1.0;
  EXPECT_EQ(compute(TaskKind::kKey, key_scores, keys).at("key_score"), 1.0);
  Matrix va{3, 2, {0.1, 0.5, -0.3, 0.2, 0.9, -0.7}};
  EXPECT_EQ(compute(TaskKind::kRegression, va, va).at("r2"), 1.0);
}

TEST(Metrics, AucInvariantUnderMonotoneTransforms) {
  Rng rng = derive_rng(4, 0);
  for (int trial = 0; trial < 50; ++trial) {
    auto [s, y] = testing::random_scored_labels(15, rng);
    std::vector<double> t(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
    const auto a = roc_auc(s, y), b = roc_auc(t, y);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) EXPECT_DOUBLE_EQ(*a, *b);
  }
}

}  // namespace
}  // namespace myna::metrics
