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

#ifndef MYNA_MASKING_HPP_
#define MYNA_MASKING_HPP_

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "myna/audio.hpp"
#include "myna/random.hpp"

namespace myna {

struct PatchConfig {
  std::size_t patch_h = 16;
  std::size_t patch_w = 16;
  std::string name = "square";

  std::size_t patch_size() const { return patch_h * patch_w; }
  bool operator==(const PatchConfig&) const = default;

  static PatchConfig square() { return {16, 16, "square"}; }
  static PatchConfig vertical() { return {128, 2, "vertical"}; }
  // "square" or "vertical"; throws ConfigError otherwise.
  static PatchConfig by_name(const std::string& name);
};

struct GridCoord {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const GridCoord&) const = default;
};

// Non-overlapping tiling of a spectrogram, row-major patch order.
struct PatchGrid {
  std::vector<float> patches;  // count() x patch_size, row-major
  std::size_t patch_size = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<GridCoord> coords;

  std::size_t count() const { return rows * cols; }
  const float* patch(std::size_t i) const { return patches.data() + i * patch_size; }
};

// The unmasked subset of a grid.
struct TokenSet {
  std::vector<std::size_t> kept_indices;  // strictly increasing
  std::vector<float> values;              // kept() x patch_size
  std::size_t patch_size = 0;
  std::vector<GridCoord> coords;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  double mask_ratio = 0.0;

  std::size_t kept() const { return kept_indices.size(); }
  std::size_t grid_total() const { return grid_rows * grid_cols; }
};

PatchGrid patchify(const audio::MelSpectrogram& spec, const PatchConfig& cfg);

// max(1, round_half_up((1 - ratio) * total)).
std::size_t kept_token_count(std::size_t total, double ratio);

// Uniform random subset of kept_token_count() patches, sorted ascending.
// Throws ParameterError unless 0 <= ratio < 1.
TokenSet sample_mask(const PatchGrid& grid, double ratio, Rng& rng);

// Every patch kept, in grid order (evaluation path).
TokenSet keep_all(const PatchGrid& grid);

}  // namespace myna

#endif  // MYNA_MASKING_HPP_
