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

// Brute-force reference implementations of the evaluation metrics, written
// from their definitions without sharing code with the library.

#ifndef MYNA_TESTS_METRIC_ORACLES_HPP_
#define MYNA_TESTS_METRIC_ORACLES_HPP_

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "myna/random.hpp"

namespace myna::testing {

// Scores on a coarse grid so ties are common.
inline std::pair<std::vector<double>, std::vector<double>> random_scored_labels(std::size_t n, Rng& rng) {
  std::vector<double> s(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = std::round(uniform01(rng) * 5.0) / 5.0;
    y[i] = uniform01(rng) < 0.4 ? 1.0 : 0.0;
  }
  return {s, y};
}

// Fraction of (positive, negative) pairs ranked correctly, ties count 1/2.
inline std::optional<double> brute_auc(const std::vector<double>& s, const std::vector<double>& y) {
  double hits = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1.0 || y[j] != 0.0) continue;
      pairs += 1.0;
      hits += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  if (pairs == 0.0) return std::nullopt;
  return hits / pairs;
}

// Mean over positives of precision at that positive's score threshold.
inline std::optional<double> brute_ap(const std::vector<double>& s, const std::vector<double>& y) {
  double total = 0.0, positives = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1.0) continue;
    positives += 1.0;
    double above = 0.0, above_pos = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] >= s[i]) {
        above += 1.0;
        above_pos += y[j];
      }
    }
    total += above_pos / above;
  }
  if (positives == 0.0) return std::nullopt;
  return total / positives;
}

// Keys 0..11 major, 12..23 minor.
inline double brute_key_score(std::size_t est, std::size_t ref) {
  const std::size_t te = est % 12, tr = ref % 12;
  const bool me = est >= 12, mr = ref >= 12;
  if (est == ref) return 1.0;
  if (me == mr && te == (tr + 7) % 12) return 0.5;
  if (!mr && me && te == (tr + 9) % 12) return 0.3;  // relative minor
  if (mr && !me && te == (tr + 3) % 12) return 0.3;  // relative major
  if (me != mr && te == tr) return 0.2;
  return 0.0;
}

inline double brute_weighted_key(const std::vector<std::size_t>& est, const std::vector<std::size_t>& ref) {
  double total = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) total += brute_key_score(est[i], ref[i]);
  return total / static_cast<double>(est.size());
}

inline double brute_r2(const std::vector<double>& p, const std::vector<double>& y) {
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    res += (y[i] - p[i]) * (y[i] - p[i]);
    tot += (y[i] - mean) * (y[i] - mean);
  }
  if (tot == 0.0) return res == 0.0 ? 1.0 : 0.0;
  return 1.0 - res / tot;
}

}  // namespace myna::testing

#endif  // MYNA_TESTS_METRIC_ORACLES_HPP_
