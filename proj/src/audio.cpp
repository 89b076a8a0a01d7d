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

#include "myna/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include <fftw3.h>

#include "myna/error.hpp"

namespace myna::audio {
namespace {

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

// In-place forward FFTW plan for one transform size. Planning is not
// thread-safe in FFTW, so plans are created under a lock and cached for the
// life of the process; executing a plan on new arrays is safe.
fftw_plan plan_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard<std::mutex> lock(mu);
  auto it = plans.find(n);
  if (it == plans.end()) {
    std::vector<std::complex<double>> scratch(n);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    const fftw_plan plan =
        fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    it = plans.emplace(n, plan).first;
  }
  return it->second;
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t length) {
  if (length == 1) return 0;
  const auto last = static_cast<std::ptrdiff_t>(length) - 1;
  while (i < 0 || i > last) {
    if (i < 0) i = -i;
    if (i > last) i = 2 * last - i;
  }
  return static_cast<std::size_t>(i);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

std::string MelConfig::hash() const {
  std::ostringstream text;
  text.precision(17);
  text << "sr=" << sample_rate << ";n_fft=" << n_fft << ";hop=" << hop
       << ";mels=" << mel_bins << ";fmin=" << f_min << ";fmax=" << f_max
       << ";floor=" << log_floor << ";frames=" << frames << ";htk;hann;reflect";
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

AudioClip decode_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(path.string() + ": not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > available) throw FormatError(path.string() + ": bad fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      block_align = read_u16(chunk + 20);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible) {
        if (size < 40) throw FormatError(path.string() + ": short extensible fmt chunk");
        format = read_u16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Streaming writers leave the size at 0xFFFFFFFF; clamp to the file.
      data_size = std::min<std::size_t>(size, available);
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw FormatError(path.string() + ": missing fmt chunk");
  if (data == nullptr) throw FormatError(path.string() + ": missing data chunk");
  if (rate == 0) throw FormatError(path.string() + ": zero sample rate");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw UnsupportedError(path.string() + ": unsupported encoding (format " +
                           std::to_string(format) + ", " + std::to_string(bits) + " bits)");
  }
  if (channels != 1 && channels != 2) {
    throw UnsupportedError(path.string() + ": unsupported channel count " +
                           std::to_string(channels));
  }
  const std::size_t sample_bytes = bits / 8;
  if (block_align != sample_bytes * channels) {
    throw FormatError(path.string() + ": inconsistent block alignment");
  }

  const std::size_t frames = data_size / block_align;
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.source_id = path.string();
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + f * block_align + c * sample_bytes;
      if (pcm16) {
        acc += static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else {
        const float v = std::bit_cast<float>(read_u32(p));
        if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite sample");
        acc += std::clamp(static_cast<double>(v), -1.0, 1.0);
      }
    }
    clip.samples[f] = static_cast<float>(acc / channels);
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding, int channels) {
  if (channels != 1 && channels != 2) throw ParameterError("write_wav: channels must be 1 or 2");
  const bool pcm16 = encoding == WavEncoding::kPcm16;
  const std::uint16_t sample_bytes = pcm16 ? 2 : 4;
  const auto block_align = static_cast<std::uint16_t>(sample_bytes * channels);
  const auto data_size = static_cast<std::uint32_t>(clip.samples.size() * block_align);

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * block_align);
  put_u16(out, block_align);
  put_u16(out, static_cast<std::uint16_t>(sample_bytes * 8));
  out += "data";
  put_u32(out, data_size);
  for (float s : clip.samples) {
    for (int c = 0; c < channels; ++c) {
      if (pcm16) {
        const long q = std::lround(static_cast<double>(s) * 32768.0);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(
                         std::clamp<long>(q, -32768, 32767))));
      } else {
        put_u32(out, std::bit_cast<std::uint32_t>(s));
      }
    }
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw FormatError("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (clip.sample_rate < 1 || target_rate < 1) throw ParameterError("resample: rates must be positive");
  if (clip.sample_rate == target_rate) return clip;

  const auto src = static_cast<std::uint64_t>(clip.sample_rate);
  const auto dst = static_cast<std::uint64_t>(target_rate);
  const std::uint64_t in_len = clip.samples.size();
  const std::uint64_t out_len = (in_len * dst + src / 2) / src;

  constexpr double kZeroCrossings = 32.0;
  constexpr double kRolloff = 0.95;
  const double cutoff = kRolloff * std::min(1.0, static_cast<double>(dst) / src);
  const double half_width = kZeroCrossings / cutoff;  // in input samples
  const double step = static_cast<double>(src) / static_cast<double>(dst);

  AudioClip out;
  out.sample_rate = target_rate;
  out.source_id = clip.source_id;
  out.samples.resize(out_len);
  for (std::uint64_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) * step;
    const auto lo = static_cast<std::int64_t>(std::ceil(t - half_width));
    const auto hi = static_cast<std::int64_t>(std::floor(t + half_width));
    double acc = 0.0;
    for (std::int64_t k = std::max<std::int64_t>(lo, 0);
         k <= std::min<std::int64_t>(hi, static_cast<std::int64_t>(in_len) - 1); ++k) {
      const double x = t - static_cast<double>(k);
      const double window = 0.5 + 0.5 * std::cos(std::numbers::pi * x / half_width);
      acc += clip.samples[static_cast<std::size_t>(k)] * cutoff * sinc(cutoff * x) * window;
    }
    out.samples[n] = static_cast<float>(acc);
  }
  return out;
}

std::pair<Segment, Segment> select_segments(const AudioClip& clip, Rng& rng) {
  if (clip.sample_rate != kSampleRate) {
    throw ParameterError("select_segments: clip must be resampled to 16 kHz first");
  }
  if (clip.samples.size() < kSegmentSamples) {
    throw TooShortError("clip '" + clip.source_id + "' is shorter than 3 s");
  }
  std::uniform_int_distribution<std::size_t> offset(0, clip.samples.size() - kSegmentSamples);
  auto cut = [&](std::size_t start) {
    Segment s;
    s.offset = start;
    s.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                     clip.samples.begin() + static_cast<std::ptrdiff_t>(start + kSegmentSamples));
    return s;
  };
  const std::size_t first = offset(rng);
  const std::size_t second = offset(rng);
  return {cut(first), cut(second)};
}

std::vector<Segment> split_windows(const AudioClip& clip) {
  if (clip.samples.size() < kSegmentSamples) {
    throw TooShortError("clip '" + clip.source_id + "' is shorter than 3 s");
  }
  std::vector<Segment> windows;
  for (std::size_t start = 0; start + kSegmentSamples <= clip.samples.size();
       start += kSegmentSamples) {
    Segment s;
    s.offset = start;
    s.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                     clip.samples.begin() + static_cast<std::ptrdiff_t>(start + kSegmentSamples));
    windows.push_back(std::move(s));
  }
  return windows;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(const MelConfig& config) : num_fft_bins_(config.n_fft / 2 + 1) {
  const double mel_lo = hz_to_mel(config.f_min);
  const double mel_hi = hz_to_mel(config.f_max);
  std::vector<double> edges(config.mel_bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(config.mel_bins + 1));
  }
  const double bin_hz = static_cast<double>(config.sample_rate) / static_cast<double>(config.n_fft);
  filters_.resize(config.mel_bins);
  for (std::size_t m = 0; m < config.mel_bins; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    Filter& filter = filters_[m];
    bool started = false;
    for (std::size_t k = 0; k < num_fft_bins_; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const double w = std::max(0.0, std::min((f - left) / (center - left),
                                              (right - f) / (right - center)));
      if (w > 0.0) {
        if (!started) {
          filter.first_bin = k;
          started = true;
        }
        filter.weights.resize(k - filter.first_bin + 1, 0.0);
        filter.weights.back() = w;
      }
    }
  }
}

std::vector<double> MelFilterbank::dense_row(std::size_t m) const {
  std::vector<double> row(num_fft_bins_, 0.0);
  const Filter& filter = filters_.at(m);
  std::copy(filter.weights.begin(), filter.weights.end(),
            row.begin() + static_cast<std::ptrdiff_t>(filter.first_bin));
  return row;
}

void MelFilterbank::apply(std::span<const double> power, std::span<double> out) const {
  for (std::size_t m = 0; m < filters_.size(); ++m) {
    const Filter& filter = filters_[m];
    double acc = 0.0;
    for (std::size_t i = 0; i < filter.weights.size(); ++i) {
      acc += filter.weights[i] * power[filter.first_bin + i];
    }
    out[m] = acc;
  }
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

void fft(std::span<std::complex<double>> data) {
  const std::size_t n = data.size();
  if (n == 0 || !std::has_single_bit(n)) throw ParameterError("fft: size must be a power of two");
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan_for(n), buf, buf);
}

std::vector<double> power_spectrum(std::span<const double> frame) {
  std::vector<std::complex<double>> buf(frame.begin(), frame.end());
  fft(buf);
  std::vector<double> power(frame.size() / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);
  return power;
}

MelSpectrogram mel_spectrogram(std::span<const float> samples, const MelConfig& config) {
  if (samples.empty()) throw ShapeError("mel_spectrogram: empty input");
  const std::size_t n_fft = config.n_fft;
  const std::size_t total_frames = 1 + samples.size() / config.hop;
  const std::size_t frames = config.frames == 0 ? total_frames : config.frames;
  if (total_frames < frames) {
    throw ShapeError("mel_spectrogram: input yields " + std::to_string(total_frames) +
                     " frames, need " + std::to_string(frames));
  }

  const MelFilterbank bank(config);
  const std::vector<double> window = hann_window(n_fft);
  const auto pad = static_cast<std::ptrdiff_t>(n_fft / 2);

  MelSpectrogram spec;
  spec.mel_bins = config.mel_bins;
  spec.frames = frames;
  spec.config_hash = config.hash();
  spec.values.resize(config.mel_bins * frames);

  std::vector<std::complex<double>> buf(n_fft);
  std::vector<double> power(n_fft / 2 + 1);
  std::vector<double> mel(config.mel_bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * config.hop) - pad;
    for (std::size_t i = 0; i < n_fft; ++i) {
      const std::size_t idx = reflect_index(start + static_cast<std::ptrdiff_t>(i), samples.size());
      buf[i] = {samples[idx] * window[i], 0.0};
    }
    fft(buf);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);
    bank.apply(power, mel);
    for (std::size_t m = 0; m < config.mel_bins; ++m) {
      spec.values[m * frames + t] = static_cast<float>(std::log(mel[m] + config.log_floor));
    }
  }
  return spec;
}

MelSpectrogram standardize(const MelSpectrogram& spec) {
  const double n = static_cast<double>(spec.values.size());
  double mean = 0.0;
  for (float v : spec.values) mean += v;
  mean /= n;
  double var = 0.0;
  for (float v : spec.values) var += (v - mean) * (v - mean);
  const double std = std::max(std::sqrt(var / n), 1e-6);

  MelSpectrogram out = spec;
  for (float& v : out.values) v = static_cast<float>((v - mean) / std);
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    ManifestEntry entry;
    entry.path = fields[0];
    if (entry.path.is_relative()) entry.path = base / entry.path;
    if (fields.size() > 1) entry.label = fields[1];
    if (fields.size() > 2) entry.split = fields[2];
    entries.push_back(std::move(entry));
  }
  return entries;
}

AudioClip load_clip(const std::filesystem::path& path) {
  AudioClip clip = decode_wav(path);
  if (clip.sample_rate != kSampleRate) clip = resample(clip, kSampleRate);
  return clip;
}

}  // namespace myna::audio
