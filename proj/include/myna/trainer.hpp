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

// Pre-training: positive-pair construction, contrastive / hybrid / MAE
// steps, Adam, checkpoints and clip-level embeddings.

#ifndef MYNA_TRAINER_HPP_
#define MYNA_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "myna/audio.hpp"
#include "myna/autodiff.hpp"
#include "myna/config.hpp"
#include "myna/masking.hpp"
#include "myna/objectives.hpp"
#include "myna/random.hpp"
#include "myna/vit.hpp"

namespace myna::train {

using Params = vit::ModelParams<float>;

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::map<std::string, std::vector<float>> m;
  std::map<std::string, std::vector<float>> v;
  std::uint64_t t = 0;

  bool operator==(const AdamState&) const = default;
};

// One Adam update with bias correction. Weight decay is decoupled: each
// parameter is first shrunk by lr * weight_decay * theta. Throws
// ContractError if any parameter has no gradient buffer.
void adam_step(Params& params, AdamState& state, const AdamConfig& cfg);

// Both views of one batch item for one patch configuration.
struct ViewPair {
  TokenSet first;
  TokenSet second;
};

// Standardized log-mel spectrograms of the two segments of every batch item.
struct SpectrogramPairs {
  std::vector<audio::MelSpectrogram> first;
  std::vector<audio::MelSpectrogram> second;
};

SpectrogramPairs make_spectrogram_pairs(std::span<const audio::AudioClip* const> batch,
                                        const audio::MelConfig& mel, Rng& rng);

// Patchify both views with `cfg` and mask each independently.
std::vector<ViewPair> mask_views(const SpectrogramPairs& specs, const PatchConfig& cfg, double ratio, Rng& rng);

// InfoNCE for one patch configuration: tokenize both views of every item,
// encode them as 2N stacked views, project and normalize.
template <class T>
ad::Tensor<T> contrastive_branch_loss(std::span<const ViewPair> views, const PatchConfig& cfg,
                                      const vit::ModelParams<T>& params,
                                      const objectives::ObjectiveConfig& objective) {
  const std::size_t n = views.size();
  std::vector<ad::Tensor<T>> rows;
  std::vector<std::size_t> lengths;
  rows.reserve(2 * n);
  for (const auto& v : views) {
    rows.push_back(vit::tokenize(v.first, cfg, params));
    lengths.push_back(v.first.kept());
  }
  for (const auto& v : views) {
    rows.push_back(vit::tokenize(v.second, cfg, params));
    lengths.push_back(v.second.kept());
  }
  auto pooled = vit::encode_batch(ad::concat(rows, 0), lengths, params);
  auto z = vit::project_and_normalize(pooled, params);
  std::vector<std::size_t> first(n), second(n);
  for (std::size_t i = 0; i < n; ++i) {
    first[i] = i;
    second[i] = n + i;
  }
  return objectives::info_nce(ad::gather_rows(z, std::move(first)), ad::gather_rows(z, std::move(second)), objective);
}

// Masked-patch MSE over a batch (every item contributes the same number of
// masked patches, so this equals the mean of per-item losses).
template <class T>
ad::Tensor<T> mae_batch_loss(std::span<const PatchGrid> grids, std::span<const TokenSet> tokens,
                             const vit::ModelParams<T>& params) {
  auto recon = vit::mae_forward_batch(tokens, params);
  std::vector<std::size_t> masked;
  std::vector<T> targets;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < grids.size(); ++i) {
    std::vector<unsigned char> kept(grids[i].count(), 0);
    for (std::size_t idx : tokens[i].kept_indices) kept[idx] = 1;
    for (std::size_t p = 0; p < grids[i].count(); ++p) {
      if (kept[p]) continue;
      masked.push_back(offset + p);
      targets.insert(targets.end(), grids[i].patch(p), grids[i].patch(p) + grids[i].patch_size);
    }
    offset += grids[i].count();
  }
  if (masked.empty()) return ad::Tensor<T>::scalar(T(0));
  const std::size_t count = masked.size(), width = grids.front().patch_size;
  return ad::mse(ad::gather_rows(recon, std::move(masked)), ad::Tensor<T>::from({count, width}, std::move(targets)));
}

struct StepStats {
  double loss = 0.0;
  std::size_t tokens_kept = 0;  // tokens entering the encoder this step
  double model_ms = 0.0;        // forward + backward
  double wall_ms = 0.0;         // whole step including DSP and the update
};

// One optimization step on `batch` (every clip >= 3 s, at least 2 clips):
// segments, spectrograms, patches, masks, loss, backward, Adam.
StepStats pretrain_step(std::span<const audio::AudioClip* const> batch, Params& params, AdamState& adam,
                        const TrainConfig& cfg, const audio::MelConfig& mel, Rng& rng);

// Batch item indices: successive shuffled passes over the corpus.
std::vector<std::size_t> sample_batch(std::size_t corpus_size, std::size_t batch_size, Rng& rng);

struct Checkpoint {
  RunConfig config;
  Params params;
  AdamState adam;
  std::uint64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Runs pretrain_step over a fixed corpus. Step k draws its randomness from
// derive_rng(seed, k), so a run resumed from a checkpoint continues exactly
// like an uninterrupted one.
class Trainer {
 public:
  // Clips shorter than 3 s are skipped; DataError if none remain.
  Trainer(RunConfig config, std::vector<audio::AudioClip> corpus);
  Trainer(Checkpoint checkpoint, std::vector<audio::AudioClip> corpus);

  StepStats step();
  std::uint64_t steps_done() const { return step_; }
  std::size_t skipped_clips() const { return skipped_; }
  const Params& params() const { return params_; }
  Params& mutable_params() { return params_; }
  const RunConfig& config() const { return config_; }
  const std::vector<audio::AudioClip>& corpus() const { return corpus_; }
  Checkpoint checkpoint() const;

 private:
  void adopt_corpus(std::vector<audio::AudioClip> corpus);

  RunConfig config_;
  Params params_;
  AdamState adam_;
  std::uint64_t step_ = 0;
  std::vector<audio::AudioClip> corpus_;
  std::size_t skipped_ = 0;
};

// Clip embedding for probing: encoder output (no projector, no masking)
// averaged over consecutive non-overlapping 3 s windows. Output dim floats.
std::vector<float> embed_clip(const audio::AudioClip& clip, const Params& params, const PatchConfig& cfg,
                              const audio::MelConfig& mel = {});

// Mean cosine similarity of positive pairs and of cross-clip pairs, measured
// with training-style masked views of every corpus clip.
struct Alignment {
  double positive = 0.0;
  double negative = 0.0;
  double gap() const { return positive - negative; }
};
Alignment measure_alignment(std::span<const audio::AudioClip> clips, const Params& params, const PatchConfig& cfg,
                            double mask_ratio, const audio::MelConfig& mel, Rng& rng);

}  // namespace myna::train

#endif  // MYNA_TRAINER_HPP_
