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

#include "myna/metrics.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

#include "myna/error.hpp"

namespace myna::metrics {
namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": predictions and labels differ in length");
}

// Indices sorted by descending score.
std::vector<std::size_t> order_desc(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kMultilabel: return "multilabel";
    case TaskKind::kMulticlass: return "multiclass";
    case TaskKind::kKey: return "key";
    case TaskKind::kRegression: return "regression";
  }
  return "multiclass";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "multilabel") return TaskKind::kMultilabel;
  if (text == "multiclass") return TaskKind::kMulticlass;
  if (text == "key") return TaskKind::kKey;
  if (text == "regression") return TaskKind::kRegression;
  throw ConfigError("unknown task kind '" + std::string(text) + "'");
}

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
  return out;
}

std::optional<double> roc_auc(std::span<const double> scores, std::span<const double> labels) {
  require_same_size(scores.size(), labels.size(), "roc_auc");
  // Mann-Whitney U with mid-ranks for ties.
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positives = 0.0, rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[idx[k]] > 0.5) {
        positives += 1.0;
        rank_sum += mid_rank;
      }
    }
    i = j + 1;
  }
  const double negatives = static_cast<double>(scores.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) return std::nullopt;
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

std::optional<double> average_precision(std::span<const double> scores, std::span<const double> labels) {
  require_same_size(scores.size(), labels.size(), "average_precision");
  const auto idx = order_desc(scores);
  double total_pos = 0.0;
  for (double l : labels) total_pos += l > 0.5 ? 1.0 : 0.0;
  if (total_pos == 0.0) return std::nullopt;
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    // Consume the whole tie group at this threshold.
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      if (labels[idx[j]] > 0.5) {
        tp += 1.0;
      } else {
        fp += 1.0;
      }
      ++j;
    }
    const double recall = tp / total_pos;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

MacroScores macro_auc_ap(const Matrix& scores, const Matrix& labels, bool log_skipped) {
  if (scores.rows != labels.rows || scores.cols != labels.cols) throw ShapeError("macro_auc_ap: shape mismatch");
  MacroScores out;
  for (std::size_t c = 0; c < scores.cols; ++c) {
    const auto s = scores.column(c);
    const auto l = labels.column(c);
    const auto auc = roc_auc(s, l);
    const auto ap = average_precision(s, l);
    if (!auc || !ap) {
      ++out.tags_skipped;
      if (log_skipped) std::clog << "metrics: tag " << c << " has a single class present; skipped from macro average\n";
      continue;
    }
    out.auc += *auc;
    out.ap += *ap;
    ++out.tags_used;
  }
  if (out.tags_used > 0) {
    out.auc /= static_cast<double>(out.tags_used);
    out.ap /= static_cast<double>(out.tags_used);
  }
  return out;
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels) {
  require_same_size(predicted.size(), labels.size(), "accuracy");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::string key_name(std::size_t key) {
  static const char* kNames[12] = {"C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"};
  if (key >= kNumKeys) throw ParameterError("key index out of range");
  return std::string(kNames[key % 12]) + (key < 12 ? " major" : " minor");
}

double key_score(std::size_t estimated, std::size_t reference) {
  if (estimated >= kNumKeys || reference >= kNumKeys) throw ParameterError("key index out of range");
  const bool est_minor = estimated >= 12, ref_minor = reference >= 12;
  const std::size_t est = estimated % 12, ref = reference % 12;
  const std::size_t up = (est + 12 - ref) % 12;  // semitones from reference tonic up to estimate
  if (est_minor == ref_minor) {
    if (up == 0) return 1.0;
    if (up == 7) return 0.5;
    return 0.0;
  }
  if (!ref_minor && up == 9) return 0.3;  // relative minor of a major key
  if (ref_minor && up == 3) return 0.3;   // relative major of a minor key
  if (up == 0) return 0.2;                // parallel
  return 0.0;
}

double weighted_key_score(std::span<const std::size_t> estimated, std::span<const std::size_t> reference) {
  require_same_size(estimated.size(), reference.size(), "weighted_key_score");
  if (reference.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) total += key_score(estimated[i], reference[i]);
  return total / static_cast<double>(reference.size());
}

double r2_score(std::span<const double> predicted, std::span<const double> labels) {
  require_same_size(predicted.size(), labels.size(), "r2_score");
  if (labels.empty()) return 0.0;
  double mean = 0.0;
  for (double y : labels) mean += y;
  mean /= static_cast<double>(labels.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ss_res += (labels[i] - predicted[i]) * (labels[i] - predicted[i]);
    ss_tot += (labels[i] - mean) * (labels[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

std::vector<std::size_t> argmax_rows(const Matrix& scores) {
  std::vector<std::size_t> out(scores.rows);
  for (std::size_t r = 0; r < scores.rows; ++r) {
    const double* row = scores.data.data() + r * scores.cols;
    out[r] = static_cast<std::size_t>(std::max_element(row, row + scores.cols) - row);
  }
  return out;
}

std::map<std::string, double> compute(TaskKind kind, const Matrix& predictions, const Matrix& labels,
                                      bool log_skipped) {
  if (predictions.rows != labels.rows) throw ShapeError("metrics: predictions and labels differ in row count");
  std::map<std::string, double> out;
  auto class_labels = [&] {
    std::vector<std::size_t> y(labels.rows);
    for (std::size_t r = 0; r < labels.rows; ++r) y[r] = static_cast<std::size_t>(labels.at(r, 0));
    return y;
  };
  switch (kind) {
    case TaskKind::kMultilabel: {
      const MacroScores m = macro_auc_ap(predictions, labels, log_skipped);
      out["auc"] = m.auc;
      out["ap"] = m.ap;
      out["tags_skipped"] = static_cast<double>(m.tags_skipped);
      break;
    }
    case TaskKind::kMulticlass:
      out["accuracy"] = accuracy(argmax_rows(predictions), class_labels());
      break;
    case TaskKind::kKey:
      if (predictions.cols != kNumKeys) throw ShapeError("key predictions need 24 columns");
      out["key_score"] = weighted_key_score(argmax_rows(predictions), class_labels());
      break;
    case TaskKind::kRegression: {
      if (predictions.cols != labels.cols) throw ShapeError("regression predictions and labels differ in width");
      double total = 0.0;
      for (std::size_t c = 0; c < labels.cols; ++c) {
        const double r2 = r2_score(predictions.column(c), labels.column(c));
        const std::string name = labels.cols == 2 ? (c == 0 ? "r2_arousal" : "r2_valence") : "r2_" + std::to_string(c);
        out[name] = r2;
        total += r2;
      }
      out["r2"] = labels.cols ? total / static_cast<double>(labels.cols) : 0.0;
      break;
    }
  }
  return out;
}

std::string primary_metric(TaskKind kind) {
  switch (kind) {
    case TaskKind::kMultilabel: return "auc";
    case TaskKind::kMulticlass: return "accuracy";
    case TaskKind::kKey: return "key_score";
    case TaskKind::kRegression: return "r2";
  }
  return "accuracy";
}

}  // namespace myna::metrics
