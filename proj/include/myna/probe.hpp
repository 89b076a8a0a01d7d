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

// Frozen-feature probes: linear / one-hidden-layer MLP heads trained with
// Adam and early stopping, plus the hyperparameter grid search.

#ifndef MYNA_PROBE_HPP_
#define MYNA_PROBE_HPP_

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "myna/config.hpp"
#include "myna/metrics.hpp"
#include "myna/tensor_io.hpp"

namespace myna::probe {

using metrics::TaskKind;

inline constexpr std::size_t kHiddenUnits = 512;

struct ProbeConfig {
  bool standardize = false;
  std::string model = "linear";  // linear | mlp
  std::size_t batch = 64;
  double lr = 1e-5;
  double dropout = 0.25;  // applied to the (standardized) input features
  double l2 = 0.0;        // penalty on weight matrices, not biases

  bool operator==(const ProbeConfig&) const = default;
};

// Cartesian product, nested standardize > model > batch > lr > dropout > l2
// (l2 varies fastest). The default spec yields 216 configurations.
std::vector<ProbeConfig> enumerate_grid(const GridSpec& spec);
std::vector<ProbeConfig> enumerate_grid();

enum class Split { kTrain, kValid, kTest };

// Features plus labels and splits. Labels are N x 1 class indices for
// multiclass / key and N x L targets for multilabel / regression. Label
// access goes through labels_of(), which counts reads per split so callers
// can audit that selection never touched the test labels.
class Task {
 public:
  Task(TaskKind kind, std::size_t rows, std::size_t dim, std::vector<float> features, metrics::Matrix labels,
       std::size_t num_outputs, std::vector<std::size_t> train, std::vector<std::size_t> valid,
       std::vector<std::size_t> test);

  TaskKind kind() const { return kind_; }
  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::size_t num_outputs() const { return num_outputs_; }
  const float* row(std::size_t i) const { return features_.data() + i * dim_; }
  const std::vector<float>& features() const { return features_; }
  const std::vector<std::size_t>& indices(Split split) const;

  // Labels of the split's rows, in index order. Counted.
  metrics::Matrix labels_of(Split split) const;
  std::size_t label_reads(Split split) const;

  // Non-empty, in-range and pairwise-disjoint splits; labels shaped per
  // kind. Throws ValidationError.
  void validate() const;

 private:
  TaskKind kind_;
  std::size_t rows_, dim_;
  std::vector<float> features_;
  metrics::Matrix labels_;
  std::size_t num_outputs_;
  std::vector<std::size_t> train_, valid_, test_;
  std::shared_ptr<std::atomic<std::size_t>[]> reads_;
};

// Trained head. Weights are row-major [in, out].
struct ProbeModel {
  ProbeConfig config;
  std::size_t in = 0, hidden = 0, out = 0;
  std::vector<double> mean, inv_std;  // standardization (identity when off)
  std::vector<double> w1, b1, w2, b2;  // w2/b2 unused for linear heads

  // Scores / values for every row in `rows`, N x out.
  metrics::Matrix predict(const Task& task, const std::vector<std::size_t>& rows) const;
};

struct TrainLimits {
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
};

struct CellResult {
  ProbeConfig config;
  double valid_metric = 0.0;
  std::size_t epochs = 0;       // epochs actually run
  std::size_t best_epoch = 0;   // 1-based epoch whose weights were kept
  ProbeModel model;
};

// Trains on the train split, early-stops on the validation split's primary
// metric, restores the best epoch. TaskError if the train split holds a
// single class.
CellResult train_probe(const Task& task, const ProbeConfig& cfg, std::uint64_t seed, const TrainLimits& limits = {});

struct GridRow {
  ProbeConfig config;
  double valid_metric = 0.0;
  std::size_t epochs = 0;
};

struct ProbeResult {
  std::size_t best_index = 0;
  ProbeConfig best;
  double valid_metric = 0.0;
  std::map<std::string, double> test_metrics;  // winner only
  std::vector<GridRow> rows;                   // every cell, enumeration order
  std::size_t test_reads_during_selection = 0;
};

struct GridOptions {
  TrainLimits limits;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
};

// Trains every cell, picks the highest validation metric (earliest cell on
// ties), then evaluates that one cell on the test split.
ProbeResult run_grid(const Task& task, const std::vector<ProbeConfig>& grid, const GridOptions& options = {});

// Index of the best validation metric; ties go to the earliest index.
std::size_t select_best(const std::vector<double>& valid_metrics);

// config_id,standardize,model,batch,lr,dropout,l2,valid_metric,test_<metric>...
// Test columns are filled for the winning row only.
std::string results_csv(const ProbeResult& result);

// Feature files share the tensor-table format: "features" [N, dim],
// "labels" [N, L], "split_train" / "split_valid" / "split_test" index lists.
io::TensorTable feature_table(const std::vector<float>& features, std::size_t dim, const metrics::Matrix& labels,
                              const std::vector<std::size_t>& train, const std::vector<std::size_t>& valid,
                              const std::vector<std::size_t>& test, const std::string& blob = {});

// Builds a task from a feature table; `features_name` selects the matrix
// (e.g. "features.square" for hybrid exports). num_outputs for class tasks
// is max label + 1 (24 for key).
Task task_from_table(const io::TensorTable& table, TaskKind kind, const std::string& features_name = "features");

}  // namespace myna::probe

#endif  // MYNA_PROBE_HPP_
