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

#include "myna/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "myna/error.hpp"

namespace myna {

PatchConfig PatchConfig::by_name(const std::string& name) {
  if (name == "square") return square();
  if (name == "vertical") return vertical();
  throw ConfigError("unknown patch configuration '" + name + "'");
}

PatchGrid patchify(const audio::MelSpectrogram& spec, const PatchConfig& cfg) {
  if (cfg.patch_h == 0 || cfg.patch_w == 0 || spec.mel_bins % cfg.patch_h != 0 ||
      spec.frames % cfg.patch_w != 0) {
    throw ShapeError("patchify: " + std::to_string(spec.mel_bins) + "x" +
                     std::to_string(spec.frames) + " spectrogram is not divisible into " +
                     std::to_string(cfg.patch_h) + "x" + std::to_string(cfg.patch_w) + " patches");
  }
  PatchGrid grid;
  grid.rows = spec.mel_bins / cfg.patch_h;
  grid.cols = spec.frames / cfg.patch_w;
  grid.patch_size = cfg.patch_size();
  grid.patches.resize(grid.count() * grid.patch_size);
  grid.coords.reserve(grid.count());
  float* out = grid.patches.data();
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      grid.coords.push_back({r, c});
      for (std::size_t i = 0; i < cfg.patch_h; ++i) {
        for (std::size_t j = 0; j < cfg.patch_w; ++j) {
          *out++ = spec.at(r * cfg.patch_h + i, c * cfg.patch_w + j);
        }
      }
    }
  }
  return grid;
}

std::size_t kept_token_count(std::size_t total, double ratio) {
  const double kept = std::floor((1.0 - ratio) * static_cast<double>(total) + 0.5);
  return std::clamp<std::size_t>(static_cast<std::size_t>(kept), 1, total);
}

namespace {

TokenSet gather(const PatchGrid& grid, std::vector<std::size_t> indices, double ratio) {
  TokenSet tokens;
  tokens.patch_size = grid.patch_size;
  tokens.grid_rows = grid.rows;
  tokens.grid_cols = grid.cols;
  tokens.mask_ratio = ratio;
  tokens.values.reserve(indices.size() * grid.patch_size);
  for (std::size_t idx : indices) {
    tokens.values.insert(tokens.values.end(), grid.patch(idx), grid.patch(idx) + grid.patch_size);
    tokens.coords.push_back(grid.coords[idx]);
  }
  tokens.kept_indices = std::move(indices);
  return tokens;
}

}  // namespace

TokenSet sample_mask(const PatchGrid& grid, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw ParameterError("mask ratio must lie in [0, 1), got " + std::to_string(ratio));
  }
  const std::size_t total = grid.count();
  const std::size_t keep = kept_token_count(total, ratio);
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> kept;
  kept.reserve(keep);
  // Selection sampling: uniform over K-subsets and order-preserving.
  std::sample(all.begin(), all.end(), std::back_inserter(kept), keep, rng);
  return gather(grid, std::move(kept), ratio);
}

TokenSet keep_all(const PatchGrid& grid) {
  std::vector<std::size_t> all(grid.count());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return gather(grid, std::move(all), 0.0);
}

}  // namespace myna
