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

// Command implementations behind the `myna` executable. Each takes an
// already-validated RunConfig; nothing is written before validation.

#ifndef MYNA_COMMANDS_HPP_
#define MYNA_COMMANDS_HPP_

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "myna/config.hpp"
#include "myna/masking.hpp"
#include "myna/probe.hpp"
#include "myna/trainer.hpp"

namespace myna::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigExit = 2,      // bad config / parameters / usage
  kDataExit = 3,        // unreadable or unusable input data
  kValidationExit = 4,  // task / split problems
  kNumericExit = 5,     // non-finite loss
};

int exit_code_for(const std::exception& e);

// Defaults, then --config file, then --set overrides in order, then --seed.
// Validated before returning.
RunConfig resolve_config(const std::optional<fs::path>& config_file, const std::vector<std::string>& sets,
                         std::optional<std::uint64_t> seed);

// Clips of a manifest, decoded and resampled, in manifest order.
std::vector<audio::AudioClip> load_manifest_clips(const fs::path& manifest);

struct PretrainOptions {
  fs::path manifest;
  fs::path out;                    // checkpoint
  std::optional<fs::path> log;     // default: <out>.log.csv
  std::optional<fs::path> resume;  // continue from this checkpoint
};

// Trains cfg.train.steps steps (in total, counting resumed ones), appends
// step,loss,lr,tokens_kept,wall_ms rows to the log, writes the checkpoint.
// Returns the final loss.
double cmd_pretrain(const RunConfig& cfg, const PretrainOptions& opts, std::ostream& out);

// One row per manifest clip (manifest order). Labels come from the manifest
// label column: numbers (comma-separated for multi-target) are used as is,
// anything else is mapped to class indices in sorted-name order.
void cmd_embed(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out_features,
               std::ostream& out);

// Grid search over cfg.probe.grid; writes the results CSV and prints the
// winner. representation: best | square | vertical | concat.
probe::ProbeResult cmd_probe(const RunConfig& cfg, const fs::path& features, const fs::path& out_csv,
                             std::ostream& out);

struct SweepRow {
  double value = 0.0;  // ratio or batch size
  double loss = 0.0;
  double probe_metric = 0.0;
  double step_wall_ms = 0.0;
  double flops_per_step = 0.0;
};

// Short pre-training on the synthetic corpus plus a fixed synthetic probe.
SweepRow sweep_point(const RunConfig& cfg);
std::vector<SweepRow> cmd_sweep_mask(const RunConfig& cfg, const fs::path& out_csv, std::ostream& out);
std::vector<SweepRow> cmd_sweep_batch(const RunConfig& cfg, const fs::path& out_csv, std::ostream& out);

// Input, reconstruction and overlay images for one clip, each mel_bins x
// frames with row 0 = lowest mel bin.
struct MaeImages {
  std::size_t rows = 0, cols = 0;
  std::vector<float> input, reconstruction, overlay;
  TokenSet tokens;  // kept patches
  PatchConfig patch;
};
MaeImages mae_images(const audio::AudioClip& clip, const train::Params& params, double mask_ratio, Rng& rng,
                     const audio::MelConfig& mel = {});

// Binary PGM (P5), highest mel bin on the top row, min-max scaled to 0..255.
std::string encode_pgm(const std::vector<float>& image, std::size_t rows, std::size_t cols);

// Writes clip_NNN_{input,recon,overlay}.pgm plus clip_NNN.tensors (the
// unscaled float images) per manifest clip. ConfigError for non-MAE
// checkpoints.
void cmd_mae_dump(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out_dir, double mask_ratio,
                  std::uint64_t seed, std::ostream& out);

// Synthetic corpora for smoke runs: `mixtures` (unlabeled) or `tones`
// (labeled 4-class frequency task with splits).
fs::path cmd_synth(const std::string& kind, std::size_t count, double seconds, std::uint64_t seed,
                   const fs::path& out_dir);

}  // namespace myna::cli

#endif  // MYNA_COMMANDS_HPP_
