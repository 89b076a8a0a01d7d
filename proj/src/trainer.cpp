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

#include "myna/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "myna/error.hpp"
#include "myna/tensor_io.hpp"

namespace myna::train {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

constexpr std::string_view kStateHeader = "\n[state]\n";

std::string adam_m_name(const std::string& p) { return "adam.m/" + p; }
std::string adam_v_name(const std::string& p) { return "adam.v/" + p; }

std::vector<std::uint64_t> to_u64_shape(const ad::Shape& s) { return {s.begin(), s.end()}; }

}  // namespace

void adam_step(Params& params, AdamState& state, const AdamConfig& cfg) {
  for (const auto& [name, tensor] : params.tensors) {
    if (!tensor.has_grad()) throw ContractError("adam_step: parameter '" + name + "' has no gradient");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const double decay = cfg.lr * cfg.weight_decay;
  for (auto& [name, tensor] : params.tensors) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(tensor.numel(), 0.0f);
      v.assign(tensor.numel(), 0.0f);
    }
    auto theta = tensor.mutable_data();
    auto grad = tensor.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i];
      double th = theta[i];
      th -= decay * th;
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      th -= cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      theta[i] = static_cast<float>(th);
    }
  }
}

SpectrogramPairs make_spectrogram_pairs(std::span<const audio::AudioClip* const> batch,
                                        const audio::MelConfig& mel, Rng& rng) {
  SpectrogramPairs out;
  out.first.reserve(batch.size());
  out.second.reserve(batch.size());
  for (const audio::AudioClip* clip : batch) {
    auto [a, b] = audio::select_segments(*clip, rng);
    out.first.push_back(audio::standardize(audio::mel_spectrogram(a, mel)));
    out.second.push_back(audio::standardize(audio::mel_spectrogram(b, mel)));
  }
  return out;
}

std::vector<ViewPair> mask_views(const SpectrogramPairs& specs, const PatchConfig& cfg, double ratio, Rng& rng) {
  std::vector<ViewPair> views;
  views.reserve(specs.first.size());
  for (std::size_t i = 0; i < specs.first.size(); ++i) {
    ViewPair pair;
    pair.first = sample_mask(patchify(specs.first[i], cfg), ratio, rng);
    pair.second = sample_mask(patchify(specs.second[i], cfg), ratio, rng);
    views.push_back(std::move(pair));
  }
  return views;
}

std::vector<std::size_t> sample_batch(std::size_t corpus_size, std::size_t batch_size, Rng& rng) {
  if (corpus_size == 0) throw DataError("empty corpus");
  std::vector<std::size_t> order(corpus_size);
  std::vector<std::size_t> batch;
  batch.reserve(batch_size);
  while (batch.size() < batch_size) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < corpus_size && batch.size() < batch_size; ++i) batch.push_back(order[i]);
  }
  return batch;
}

StepStats pretrain_step(std::span<const audio::AudioClip* const> batch, Params& params, AdamState& adam,
                        const TrainConfig& cfg, const audio::MelConfig& mel, Rng& rng) {
  if (batch.size() < 2) throw BatchSizeError("pretrain_step needs at least 2 clips, got " + std::to_string(batch.size()));
  const auto start = Clock::now();
  StepStats stats;
  ad::Tensor<float> loss;
  double model_ms = 0.0;

  if (cfg.mode == TrainMode::kMae) {
    const PatchConfig& pc = params.config.patch_cfgs.front();
    std::vector<PatchGrid> grids;
    std::vector<TokenSet> tokens;
    for (const audio::AudioClip* clip : batch) {
      auto [segment, unused] = audio::select_segments(*clip, rng);
      grids.push_back(patchify(audio::standardize(audio::mel_spectrogram(segment, mel)), pc));
      tokens.push_back(sample_mask(grids.back(), cfg.mask_ratio, rng));
      stats.tokens_kept += tokens.back().kept();
    }
    const auto model_start = Clock::now();
    params.zero_grad();
    loss = mae_batch_loss<float>(grids, tokens, params);
    if (loss.requires_grad()) ad::backward(loss);
    model_ms = ms_since(model_start);
  } else {
    const SpectrogramPairs specs = make_spectrogram_pairs(batch, mel, rng);
    std::vector<std::vector<ViewPair>> branches;
    for (const auto& pc : params.config.patch_cfgs) {
      branches.push_back(mask_views(specs, pc, cfg.mask_ratio, rng));
      for (const auto& v : branches.back()) stats.tokens_kept += v.first.kept() + v.second.kept();
    }
    const auto model_start = Clock::now();
    params.zero_grad();
    std::vector<ad::Tensor<float>> losses;
    for (std::size_t b = 0; b < branches.size(); ++b) {
      losses.push_back(contrastive_branch_loss<float>(branches[b], params.config.patch_cfgs[b], params, cfg.objective));
    }
    loss = losses.size() == 2 ? objectives::hybrid_loss(losses[0], losses[1]) : losses.front();
    ad::backward(loss);
    model_ms = ms_since(model_start);
  }

  stats.loss = loss.item();
  if (!std::isfinite(stats.loss)) {
    throw NumericError("non-finite loss " + std::to_string(stats.loss) + " (tokens kept " +
                       std::to_string(stats.tokens_kept) + ")");
  }
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.weight_decay = cfg.weight_decay;
  adam_step(params, adam, adam_cfg);
  stats.model_ms = model_ms;
  stats.wall_ms = ms_since(start);
  return stats;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::TensorTable table;
  table.blob = ckpt.config.canonical() + std::string(kStateHeader) + "step = " + std::to_string(ckpt.step) +
               "\nadam_t = " + std::to_string(ckpt.adam.t) + "\n";
  for (const auto& [name, tensor] : ckpt.params.tensors) {
    table.add(name, to_u64_shape(tensor.shape()), {tensor.data().begin(), tensor.data().end()});
  }
  for (const auto& [name, tensor] : ckpt.params.tensors) {
    auto m = ckpt.adam.m.find(name);
    auto v = ckpt.adam.v.find(name);
    if (m == ckpt.adam.m.end() || v == ckpt.adam.v.end()) continue;
    table.add(adam_m_name(name), to_u64_shape(tensor.shape()), m->second);
    table.add(adam_v_name(name), to_u64_shape(tensor.shape()), v->second);
  }
  io::write_table(path, table);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const io::TensorTable table = io::read_table(path);
  const std::size_t split = table.blob.find(kStateHeader);
  if (split == std::string::npos) throw FormatError(path.string() + ": checkpoint blob has no [state] section");

  Checkpoint ckpt;
  ckpt.config = RunConfig::parse(std::string_view(table.blob).substr(0, split));
  ckpt.config.validate();
  std::string_view state = std::string_view(table.blob).substr(split + kStateHeader.size());
  auto read_state = [&](std::string_view key) -> std::uint64_t {
    const std::string needle = std::string(key) + " = ";
    const std::size_t pos = state.find(needle);
    if (pos == std::string_view::npos) throw FormatError("checkpoint state lacks '" + std::string(key) + "'");
    return std::stoull(std::string(state.substr(pos + needle.size())));
  };
  ckpt.step = read_state("step");
  ckpt.adam.t = read_state("adam_t");

  const vit::ModelConfig mc = ckpt.config.model_config();
  ckpt.params.config = mc;
  for (const auto& [name, shape] : vit::parameter_layout(mc)) {
    const io::NamedTensor* t = table.find(name);
    if (t == nullptr) throw ConfigError(path.string() + ": checkpoint lacks parameter '" + name + "'");
    if (t->shape != to_u64_shape(shape)) {
      throw ConfigError(path.string() + ": parameter '" + name + "' has the wrong shape");
    }
    ckpt.params.tensors.emplace(name, ad::Tensor<float>::from(shape, t->data, true));
    const io::NamedTensor* m = table.find(adam_m_name(name));
    const io::NamedTensor* v = table.find(adam_v_name(name));
    if (m != nullptr && v != nullptr) {
      ckpt.adam.m[name] = m->data;
      ckpt.adam.v[name] = v->data;
    }
  }
  return ckpt;
}

Trainer::Trainer(RunConfig config, std::vector<audio::AudioClip> corpus) : config_(std::move(config)) {
  config_.validate();
  params_ = vit::init_params(config_.model_config(), config_.train.seed);
  adopt_corpus(std::move(corpus));
}

Trainer::Trainer(Checkpoint checkpoint, std::vector<audio::AudioClip> corpus)
    : config_(std::move(checkpoint.config)),
      params_(std::move(checkpoint.params)),
      adam_(std::move(checkpoint.adam)),
      step_(checkpoint.step) {
  adopt_corpus(std::move(corpus));
}

void Trainer::adopt_corpus(std::vector<audio::AudioClip> corpus) {
  for (auto& clip : corpus) {
    if (clip.sample_rate != audio::kSampleRate) clip = audio::resample(clip, audio::kSampleRate);
    if (clip.samples.size() < audio::kSegmentSamples) {
      ++skipped_;
      continue;
    }
    corpus_.push_back(std::move(clip));
  }
  if (corpus_.empty()) throw DataError("no clips of at least 3 s in the training corpus");
}

StepStats Trainer::step() {
  Rng rng = derive_rng(config_.train.seed, step_ + 1);
  const auto indices = sample_batch(corpus_.size(), config_.train.batch_size, rng);
  std::vector<const audio::AudioClip*> batch;
  batch.reserve(indices.size());
  for (std::size_t i : indices) batch.push_back(&corpus_[i]);
  StepStats stats = pretrain_step(batch, params_, adam_, config_.train, config_.audio, rng);
  ++step_;
  return stats;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.config = config_;
  ckpt.adam = adam_;
  ckpt.step = step_;
  ckpt.params.config = params_.config;
  // Deep copy so later training does not mutate the snapshot.
  for (const auto& [name, t] : params_.tensors) ckpt.params.tensors.emplace(name, ad::cast<float>(t, true));
  return ckpt;
}

std::vector<float> embed_clip(const audio::AudioClip& clip, const Params& params, const PatchConfig& cfg,
                              const audio::MelConfig& mel) {
  const audio::AudioClip* source = &clip;
  audio::AudioClip resampled;
  if (clip.sample_rate != audio::kSampleRate) {
    resampled = audio::resample(clip, audio::kSampleRate);
    source = &resampled;
  }
  const auto windows = audio::split_windows(*source);
  ad::NoGradGuard no_grad;
  std::vector<ad::Tensor<float>> rows;
  std::vector<std::size_t> lengths;
  for (const auto& w : windows) {
    const TokenSet tokens = keep_all(patchify(audio::standardize(audio::mel_spectrogram(w, mel)), cfg));
    rows.push_back(vit::tokenize(tokens, cfg, params));
    lengths.push_back(tokens.kept());
  }
  const auto pooled = vit::encode_batch(rows.size() == 1 ? rows.front() : ad::concat(rows, 0), lengths, params);
  const auto clip_mean = ad::mean(pooled, 0);
  return {clip_mean.data().begin(), clip_mean.data().end()};
}

Alignment measure_alignment(std::span<const audio::AudioClip> clips, const Params& params, const PatchConfig& cfg,
                            double mask_ratio, const audio::MelConfig& mel, Rng& rng) {
  if (clips.size() < 2) throw BatchSizeError("measure_alignment needs at least 2 clips");
  ad::NoGradGuard no_grad;
  std::vector<const audio::AudioClip*> batch;
  for (const auto& c : clips) batch.push_back(&c);
  const auto specs = make_spectrogram_pairs(batch, mel, rng);
  const auto views = mask_views(specs, cfg, mask_ratio, rng);
  const std::size_t n = views.size();
  std::vector<ad::Tensor<float>> rows;
  std::vector<std::size_t> lengths;
  for (const auto& v : views) {
    rows.push_back(vit::tokenize(v.first, cfg, params));
    lengths.push_back(v.first.kept());
  }
  for (const auto& v : views) {
    rows.push_back(vit::tokenize(v.second, cfg, params));
    lengths.push_back(v.second.kept());
  }
  const auto z = vit::project_and_normalize(vit::encode_batch(ad::concat(rows, 0), lengths, params), params);
  const std::size_t p = z.cols();
  auto cosine = [&](std::size_t a, std::size_t b) {
    double dot = 0.0;
    for (std::size_t j = 0; j < p; ++j) dot += static_cast<double>(z.at(a, j)) * z.at(b, j);
    return dot;
  };
  Alignment out;
  double neg_sum = 0.0;
  std::size_t neg_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out.positive += cosine(i, n + i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      neg_sum += cosine(i, j) + cosine(i, n + j);
      neg_count += 2;
    }
  }
  out.positive /= static_cast<double>(n);
  out.negative = neg_sum / static_cast<double>(neg_count);
  return out;
}

}  // namespace myna::train
