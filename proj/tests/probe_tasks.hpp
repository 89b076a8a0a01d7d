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

// Small synthetic probe tasks with known answers.

#ifndef MYNA_TESTS_PROBE_TASKS_HPP_
#define MYNA_TESTS_PROBE_TASKS_HPP_

#include <cmath>
#include <vector>

#include "myna/probe.hpp"
#include "myna/random.hpp"

namespace myna::testing {

struct SplitIndices {
  std::vector<std::size_t> train, valid, test;
};

// Rows i % 5 in {0,1,2} train, 3 valid, 4 test.
inline SplitIndices five_way_split(std::size_t rows) {
  SplitIndices s;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t m = i % 5;
    (m < 3 ? s.train : m == 3 ? s.valid : s.test).push_back(i);
  }
  return s;
}

// `classes` well-separated Gaussian blobs in `dim` dimensions; if
// `random_labels`, the labels ignore the features entirely.
inline probe::Task blob_task(std::size_t classes, std::size_t rows, std::size_t dim, std::uint64_t seed,
                             bool random_labels = false) {
  Rng rng = derive_rng(seed, 0);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
  for (auto& c : centers) {
    for (double& v : c) v = 4.0 * (2.0 * uniform01(rng) - 1.0);
  }
  std::vector<float> x(rows * dim);
  metrics::Matrix y{rows, 1, std::vector<double>(rows)};
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t c = i % classes;
    for (std::size_t j = 0; j < dim; ++j) x[i * dim + j] = static_cast<float>(centers[c][j] + noise(rng));
    y.data[i] = static_cast<double>(random_labels ? static_cast<std::size_t>(uniform01(rng) * classes) : c);
  }
  auto s = five_way_split(rows);
  return probe::Task(metrics::TaskKind::kMulticlass, rows, dim, std::move(x), std::move(y), classes,
                     std::move(s.train), std::move(s.valid), std::move(s.test));
}

// Two classes separated by a margin along the first feature; the remaining
// features are noise.
inline probe::Task separable_task(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 0);
  std::vector<float> x(rows * dim);
  metrics::Matrix y{rows, 1, std::vector<double>(rows)};
  for (std::size_t i = 0; i < rows; ++i) {
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    y.data[i] = static_cast<double>(i % 2);
    x[i * dim] = static_cast<float>(sign * (2.0 + uniform01(rng)));
    for (std::size_t j = 1; j < dim; ++j) x[i * dim + j] = static_cast<float>(0.5 * (2.0 * uniform01(rng) - 1.0));
  }
  auto s = five_way_split(rows);
  return probe::Task(metrics::TaskKind::kMulticlass, rows, dim, std::move(x), std::move(y), 2, std::move(s.train),
                     std::move(s.valid), std::move(s.test));
}

// Two regression targets that are fixed linear maps of the features.
inline probe::Task linear_regression_task(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 0);
  std::vector<double> w(dim * 2);
  for (double& v : w) v = 2.0 * uniform01(rng) - 1.0;
  std::vector<float> x(rows * dim);
  metrics::Matrix y{rows, 2, std::vector<double>(rows * 2, 0.0)};
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = 2.0 * uniform01(rng) - 1.0;
      x[i * dim + j] = static_cast<float>(v);
      y.data[i * 2] += v * w[j * 2];
      y.data[i * 2 + 1] += v * w[j * 2 + 1];
    }
  }
  auto s = five_way_split(rows);
  return probe::Task(metrics::TaskKind::kRegression, rows, dim, std::move(x), std::move(y), 2, std::move(s.train),
                     std::move(s.valid), std::move(s.test));
}

}  // namespace myna::testing

#endif  // MYNA_TESTS_PROBE_TASKS_HPP_
