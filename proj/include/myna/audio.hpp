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

// Audio front end: WAV decoding, resampling, segment selection and log-mel
// spectrograms.

#ifndef MYNA_AUDIO_HPP_
#define MYNA_AUDIO_HPP_

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "myna/random.hpp"

namespace myna::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kSegmentSamples = 48000;  // 3 s at 16 kHz

struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kSampleRate;
  std::string source_id;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct Segment {
  std::vector<float> samples;  // kSegmentSamples long
  std::size_t offset = 0;      // start sample within the source clip
};

struct MelConfig {
  int sample_rate = kSampleRate;
  std::size_t n_fft = 1024;
  std::size_t hop = 500;
  std::size_t mel_bins = 128;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-5;
  std::size_t frames = 96;

  // Stable identifier of the DSP settings (FNV-1a over the canonical text).
  std::string hash() const;
};

// mel_bins x frames, row-major: values[bin * frames + frame].
struct MelSpectrogram {
  std::vector<float> values;
  std::size_t mel_bins = 0;
  std::size_t frames = 0;
  std::string config_hash;

  float at(std::size_t bin, std::size_t frame) const {
    return values[bin * frames + frame];
  }
};

enum class WavEncoding { kPcm16, kFloat32 };

AudioClip decode_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::kPcm16, int channels = 1);

// Windowed-sinc band-limited resampling. Downsampling lowers the filter
// cutoff to the target Nyquist.
AudioClip resample(const AudioClip& clip, int target_rate);

// Two 3 s segments with independent uniform start offsets. Throws
// TooShortError for clips under 3 s and ParameterError for rates other than
// 16 kHz.
std::pair<Segment, Segment> select_segments(const AudioClip& clip, Rng& rng);

// Consecutive non-overlapping 3 s windows; a trailing partial window is
// dropped.
std::vector<Segment> split_windows(const AudioClip& clip);

// Triangular HTK-mel filterbank over the one-sided spectrum. Stored sparsely:
// each filter keeps the contiguous run of FFT bins with nonzero weight.
class MelFilterbank {
 public:
  explicit MelFilterbank(const MelConfig& config = {});

  std::size_t num_filters() const { return filters_.size(); }
  std::size_t num_fft_bins() const { return num_fft_bins_; }
  // Dense row of filter `m` (length num_fft_bins()).
  std::vector<double> dense_row(std::size_t m) const;
  void apply(std::span<const double> power, std::span<double> out) const;

 private:
  struct Filter {
    std::size_t first_bin = 0;
    std::vector<double> weights;
  };
  std::size_t num_fft_bins_ = 0;
  std::vector<Filter> filters_;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::span<std::complex<double>> data);

// |X_k|^2 for k in [0, n_fft/2] of one frame (already windowed by caller).
std::vector<double> power_spectrum(std::span<const double> frame);

// Log-mel spectrogram: reflect-padded STFT (Hann, n_fft, hop), power
// spectrum, mel filterbank, ln(S + floor), cropped to config.frames.
MelSpectrogram mel_spectrogram(std::span<const float> samples,
                               const MelConfig& config = {});
inline MelSpectrogram mel_spectrogram(const Segment& segment,
                                      const MelConfig& config = {}) {
  return mel_spectrogram(segment.samples, config);
}

// Zero mean, unit population std across all cells (std floored at 1e-6).
MelSpectrogram standardize(const MelSpectrogram& spec);

// Newline-delimited manifest. Each line is a path (relative paths resolve
// against the manifest directory), optionally followed by tab-separated
// label and split columns. Blank lines and lines starting with '#' are
// skipped.
struct ManifestEntry {
  std::filesystem::path path;
  std::string label;
  std::string split;
};
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Decode and resample to 16 kHz.
AudioClip load_clip(const std::filesystem::path& path);

}  // namespace myna::audio

#endif  // MYNA_AUDIO_HPP_
