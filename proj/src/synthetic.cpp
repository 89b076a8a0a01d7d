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

#include "myna/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "myna/error.hpp"
#include "myna/random.hpp"

namespace myna::synthetic {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

audio::AudioClip render(const std::vector<double>& freqs, const std::vector<double>& amps, double seconds,
                        double noise, Rng& rng, std::string id) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * audio::kSampleRate));
  std::vector<double> phase(freqs.size());
  for (double& p : phase) p = kTwoPi * uniform01(rng);
  const double mod_rate = 0.3 + 0.5 * uniform01(rng);
  const double mod_phase = kTwoPi * uniform01(rng);
  std::normal_distribution<double> gauss(0.0, noise);

  audio::AudioClip clip;
  clip.source_id = std::move(id);
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / audio::kSampleRate;
    double v = 0.0;
    for (std::size_t k = 0; k < freqs.size(); ++k) v += amps[k] * std::sin(kTwoPi * freqs[k] * t + phase[k]);
    const double envelope = 0.75 + 0.25 * std::sin(kTwoPi * mod_rate * t + mod_phase);
    clip.samples[i] = static_cast<float>(std::clamp(v * envelope + gauss(rng), -1.0, 1.0));
  }
  return clip;
}

}  // namespace

std::vector<audio::AudioClip> sine_mixture_corpus(std::size_t count, double seconds, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 0x5157);
  std::vector<audio::AudioClip> clips;
  clips.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    // Bases span ~3.5 octaves; the other partials sit at clip-specific ratios.
    const double base = 110.0 * std::pow(2.0, 3.5 * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(count, 1)));
    const double r1 = 1.3 + 0.6 * uniform01(rng);
    const double r2 = 2.2 + 1.2 * uniform01(rng);
    std::vector<double> freqs{base, base * r1, base * r2};
    std::vector<double> amps{0.3, 0.15 + 0.1 * uniform01(rng), 0.1 + 0.1 * uniform01(rng)};
    clips.push_back(render(freqs, amps, seconds, 0.01, rng, "mixture_" + std::to_string(i)));
  }
  return clips;
}

LabeledClips frequency_task(std::size_t clips_per_class, double seconds, std::uint64_t seed) {
  if (clips_per_class < 3) throw ParameterError("frequency_task needs at least 3 clips per class");
  Rng rng = derive_rng(seed, 0xF0);
  LabeledClips task;
  const std::size_t n_train = clips_per_class / 2;
  const std::size_t n_valid = std::max<std::size_t>(1, clips_per_class / 4);
  for (std::size_t j = 0; j < clips_per_class; ++j) {
    for (std::size_t c = 0; c < 4; ++c) {
      const double f0 = kFundamentals[c] * (1.0 + 0.04 * (uniform01(rng) - 0.5));
      std::vector<double> freqs, amps;
      for (int h = 1; h <= 4; ++h) {
        freqs.push_back(f0 * h);
        amps.push_back((0.05 + 0.25 * uniform01(rng)) / h);
      }
      const double noise = 0.005 + 0.03 * uniform01(rng);
      task.clips.push_back(render(freqs, amps, seconds, noise, rng,
                                  "tone_c" + std::to_string(c) + "_" + std::to_string(j)));
      task.labels.push_back(c);
      task.splits.push_back(j < n_train ? "train" : j < n_train + n_valid ? "valid" : "test");
    }
  }
  return task;
}

std::filesystem::path write_corpus(const std::filesystem::path& dir, const std::vector<audio::AudioClip>& clips,
                                   const std::vector<std::string>& labels, const std::vector<std::string>& splits) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path manifest = dir / "manifest.txt";
  std::ofstream out(manifest);
  if (!out) throw DataError("cannot write " + manifest.string());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%03zu.wav", i);
    audio::write_wav(dir / name, clips[i]);
    out << name;
    if (i < labels.size()) out << '\t' << labels[i];
    if (i < splits.size()) out << '\t' << splits[i];
    out << '\n';
  }
  return manifest;
}

}  // namespace myna::synthetic
