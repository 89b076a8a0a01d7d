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

// Run configuration: typed settings for every stage plus the line-oriented
// text form used by config files, --set overrides and checkpoint blobs.
//
// Grammar (one item per line):
//   # comment            ignored, as are blank lines
//   [section]            starts a section (audio, model, train, probe, sweep)
//   key = value          assigns a key of the current section
// Unknown sections or keys are rejected. Lists are comma-separated.

#ifndef MYNA_CONFIG_HPP_
#define MYNA_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "myna/audio.hpp"
#include "myna/objectives.hpp"
#include "myna/vit.hpp"

namespace myna {

enum class TrainMode { kSquare, kVertical, kHybrid, kMae };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view text);

struct TrainConfig {
  TrainMode mode = TrainMode::kSquare;
  std::size_t batch_size = 32;  // paper scale: 4096
  double mask_ratio = 0.9;
  double lr = 3e-4;
  double weight_decay = 1e-5;
  objectives::ObjectiveConfig objective;  // tau = 0.1
  std::size_t steps = 300;
  std::uint64_t seed = 0;

  void validate() const;
};

// Probe grid axes; the defaults enumerate the full 216-cell grid.
struct GridSpec {
  std::vector<bool> standardize{false, true};
  std::vector<std::string> model{"linear", "mlp"};
  std::vector<std::size_t> batch{64, 256};
  std::vector<double> lr{1e-5, 1e-4, 1e-3};
  std::vector<double> dropout{0.25, 0.5, 0.75};
  std::vector<double> l2{0.0, 1e-4, 1e-3};
};

struct ProbeSettings {
  GridSpec grid;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::size_t threads = 1;
  std::string kind = "multiclass";       // multiclass | multilabel | key | regression
  std::string representation = "best";   // best | square | vertical | concat
};

struct SweepSettings {
  std::vector<double> ratios{0.1, 0.5, 0.9};
  std::vector<std::size_t> sizes{8, 16, 32};
  std::size_t steps = 100;
  std::size_t corpus_clips = 8;
  std::size_t probe_clips_per_class = 12;
};

struct RunConfig {
  audio::MelConfig audio;
  vit::ModelConfig model;  // patch_cfgs / kind / spec dims derived from train.mode and audio
  TrainConfig train;
  ProbeSettings probe;
  SweepSettings sweep;

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  // Applies one "section.key=value" (or "section.key = value") override.
  void set(std::string_view assignment);
  void set(std::string_view section, std::string_view key, std::string_view value);

  // Canonical text: every key, fixed order, round-trip exact.
  std::string canonical() const;

  // Throws ConfigError / ParameterError on the first invalid setting.
  void validate() const;

  // Model configuration with patch set and kind resolved from train.mode.
  vit::ModelConfig model_config() const;
};

}  // namespace myna

#endif  // MYNA_CONFIG_HPP_
