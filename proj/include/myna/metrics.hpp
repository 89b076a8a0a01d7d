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

// Downstream task metrics: ROC-AUC / AP for tagging, accuracy for
// classification, weighted key score, R^2 for regression.

#ifndef MYNA_METRICS_HPP_
#define MYNA_METRICS_HPP_

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace myna::metrics {

enum class TaskKind { kMultilabel, kMulticlass, kKey, kRegression };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::vector<double> column(std::size_t c) const;
};

// Area under the ROC curve, ties counted as one half. nullopt when only one
// class is present.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const double> labels);

// Step-wise average precision: sum over distinct score thresholds of
// (recall_k - recall_{k-1}) * precision_k. nullopt without positives.
std::optional<double> average_precision(std::span<const double> scores, std::span<const double> labels);

struct MacroScores {
  double auc = 0.0;
  double ap = 0.0;
  std::size_t tags_used = 0;
  std::size_t tags_skipped = 0;  // single-class columns, excluded and logged
};
MacroScores macro_auc_ap(const Matrix& scores, const Matrix& labels, bool log_skipped = true);

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels);

// Keys are encoded 0..11 = C..B major and 12..23 = C..B minor.
inline constexpr std::size_t kNumKeys = 24;
std::string key_name(std::size_t key);
// 1.0 exact, 0.5 estimate a perfect fifth above (same mode), 0.3 relative
// major/minor, 0.2 parallel major/minor, otherwise 0.
double key_score(std::size_t estimated, std::size_t reference);
double weighted_key_score(std::span<const std::size_t> estimated, std::span<const std::size_t> reference);

double r2_score(std::span<const double> predicted, std::span<const double> labels);

std::vector<std::size_t> argmax_rows(const Matrix& scores);

// Metric map for a task. Predictions are scores/logits (classification) or
// values (regression); labels are N x 1 class indices or N x L targets.
std::map<std::string, double> compute(TaskKind kind, const Matrix& predictions, const Matrix& labels,
                                      bool log_skipped = true);

// Name of the metric that drives model selection for `kind`.
std::string primary_metric(TaskKind kind);

}  // namespace myna::metrics

#endif  // MYNA_METRICS_HPP_
