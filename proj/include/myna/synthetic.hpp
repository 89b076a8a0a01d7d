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

// Built-in synthetic audio for smoke runs, sweeps and tests.

#ifndef MYNA_SYNTHETIC_HPP_
#define MYNA_SYNTHETIC_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "myna/audio.hpp"

namespace myna::synthetic {

// `count` clips at 16 kHz, each a distinct mixture of three sinusoids with
// slow amplitude modulation and a little noise. Partial frequencies are
// spread geometrically so no two clips share a spectral profile.
std::vector<audio::AudioClip> sine_mixture_corpus(std::size_t count, double seconds, std::uint64_t seed);

// Harmonic tones labeled by fundamental (one of four classes). Class c has
// fundamental kFundamentals[c] with a small random detune, random harmonic
// weights and noise. Items are interleaved by class.
inline constexpr double kFundamentals[4] = {196.0, 294.0, 440.0, 659.0};

struct LabeledClips {
  std::vector<audio::AudioClip> clips;
  std::vector<std::size_t> labels;
  std::vector<std::string> splits;  // "train" / "valid" / "test"
  std::size_t num_classes = 4;
};

// Per class: half the clips train, a quarter valid, the rest test.
LabeledClips frequency_task(std::size_t clips_per_class, double seconds, std::uint64_t seed);

// Writes clip_000.wav ... plus manifest.txt (path[\tlabel\tsplit]) into
// `dir`; returns the manifest path.
std::filesystem::path write_corpus(const std::filesystem::path& dir, const std::vector<audio::AudioClip>& clips,
                                   const std::vector<std::string>& labels = {},
                                   const std::vector<std::string>& splits = {});

}  // namespace myna::synthetic

#endif  // MYNA_SYNTHETIC_HPP_
