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

#include "myna/config.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "myna/error.hpp"

namespace myna {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> items;
  for (;;) {
    const std::size_t comma = s.find(',');
    items.push_back(trim(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  if (items.size() == 1 && items.front().empty()) items.clear();
  return items;
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected an unsigned integer, got '" + std::string(v) + "'");
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || !std::isfinite(out)) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + s + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError(std::string(key) + ": expected a boolean, got '" + std::string(v) + "'");
}

std::string fmt_double(double v) {
  // Shortest representation that round-trips.
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

template <class T, class Fmt>
std::string join(const std::vector<T>& items, Fmt fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += fmt(items[i]);
  }
  return out;
}

std::string fmt_size(std::size_t v) { return std::to_string(v); }

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(sec, name, member)                                                          \
  Field{sec, name, [](RunConfig& c, std::string_view v) { c.member = to_size(sec "." name, v); }, \
        [](const RunConfig& c) { return fmt_size(c.member); }}
#define DOUBLE_FIELD(sec, name, member)                                                          \
  Field{sec, name, [](RunConfig& c, std::string_view v) { c.member = to_double(sec "." name, v); }, \
        [](const RunConfig& c) { return fmt_double(c.member); }}
#define BOOL_FIELD(sec, name, member)                                                          \
  Field{sec, name, [](RunConfig& c, std::string_view v) { c.member = to_bool(sec "." name, v); }, \
        [](const RunConfig& c) { return fmt_bool(c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"audio", "sample_rate",
            [](RunConfig& c, std::string_view v) { c.audio.sample_rate = static_cast<int>(to_size("audio.sample_rate", v)); },
            [](const RunConfig& c) { return std::to_string(c.audio.sample_rate); }},
      SIZE_FIELD("audio", "n_fft", audio.n_fft),
      SIZE_FIELD("audio", "hop", audio.hop),
      SIZE_FIELD("audio", "mel_bins", audio.mel_bins),
      DOUBLE_FIELD("audio", "f_min", audio.f_min),
      DOUBLE_FIELD("audio", "f_max", audio.f_max),
      DOUBLE_FIELD("audio", "log_floor", audio.log_floor),
      SIZE_FIELD("audio", "frames", audio.frames),

      SIZE_FIELD("model", "dim", model.dim),
      SIZE_FIELD("model", "depth", model.depth),
      SIZE_FIELD("model", "heads", model.heads),
      SIZE_FIELD("model", "mlp_ratio", model.mlp_ratio),
      SIZE_FIELD("model", "proj_dim", model.proj_dim),
      SIZE_FIELD("model", "decoder_dim", model.decoder_dim),
      SIZE_FIELD("model", "decoder_depth", model.decoder_depth),
      SIZE_FIELD("model", "decoder_heads", model.decoder_heads),

      Field{"train", "mode", [](RunConfig& c, std::string_view v) { c.train.mode = parse_train_mode(v); },
            [](const RunConfig& c) { return to_string(c.train.mode); }},
      SIZE_FIELD("train", "batch_size", train.batch_size),
      DOUBLE_FIELD("train", "mask_ratio", train.mask_ratio),
      DOUBLE_FIELD("train", "lr", train.lr),
      DOUBLE_FIELD("train", "weight_decay", train.weight_decay),
      DOUBLE_FIELD("train", "tau", train.objective.tau),
      BOOL_FIELD("train", "symmetrize", train.objective.symmetrize),
      BOOL_FIELD("train", "denominator_includes_positive", train.objective.denominator_includes_positive),
      SIZE_FIELD("train", "steps", train.steps),
      Field{"train", "seed", [](RunConfig& c, std::string_view v) { c.train.seed = to_u64("train.seed", v); },
            [](const RunConfig& c) { return std::to_string(c.train.seed); }},

      Field{"probe", "standardize",
            [](RunConfig& c, std::string_view v) {
              c.probe.grid.standardize.clear();
              for (auto item : split_list(v)) c.probe.grid.standardize.push_back(to_bool("probe.standardize", item));
            },
            [](const RunConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.probe.grid.standardize.size(); ++i) {
                if (i) out += ",";
                out += c.probe.grid.standardize[i] ? "on" : "off";
              }
              return out;
            }},
      Field{"probe", "model",
            [](RunConfig& c, std::string_view v) {
              c.probe.grid.model.clear();
              for (auto item : split_list(v)) {
                if (item != "linear" && item != "mlp") {
                  throw ConfigError("probe.model: expected linear or mlp, got '" + std::string(item) + "'");
                }
                c.probe.grid.model.emplace_back(item);
              }
            },
            [](const RunConfig& c) { return join(c.probe.grid.model, [](const std::string& s) { return s; }); }},
      Field{"probe", "batch",
            [](RunConfig& c, std::string_view v) {
              c.probe.grid.batch.clear();
              for (auto item : split_list(v)) c.probe.grid.batch.push_back(to_size("probe.batch", item));
            },
            [](const RunConfig& c) { return join(c.probe.grid.batch, fmt_size); }},
      Field{"probe", "lr",
            [](RunConfig& c, std::string_view v) {
              c.probe.grid.lr.clear();
              for (auto item : split_list(v)) c.probe.grid.lr.push_back(to_double("probe.lr", item));
            },
            [](const RunConfig& c) { return join(c.probe.grid.lr, fmt_double); }},
      Field{"probe", "dropout",
            [](RunConfig& c, std::string_view v) {
              c.probe.grid.dropout.clear();
              for (auto item : split_list(v)) c.probe.grid.dropout.push_back(to_double("probe.dropout", item));
            },
            [](const RunConfig& c) { return join(c.probe.grid.dropout, fmt_double); }},
      Field{"probe", "l2",
            [](RunConfig& c, std::string_view v) {
              c.probe.grid.l2.clear();
              for (auto item : split_list(v)) c.probe.grid.l2.push_back(to_double("probe.l2", item));
            },
            [](const RunConfig& c) { return join(c.probe.grid.l2, fmt_double); }},
      SIZE_FIELD("probe", "max_epochs", probe.max_epochs),
      SIZE_FIELD("probe", "patience", probe.patience),
      SIZE_FIELD("probe", "threads", probe.threads),
      Field{"probe", "kind", [](RunConfig& c, std::string_view v) { c.probe.kind = std::string(v); },
            [](const RunConfig& c) { return c.probe.kind; }},
      Field{"probe", "representation", [](RunConfig& c, std::string_view v) { c.probe.representation = std::string(v); },
            [](const RunConfig& c) { return c.probe.representation; }},

      Field{"sweep", "ratios",
            [](RunConfig& c, std::string_view v) {
              c.sweep.ratios.clear();
              for (auto item : split_list(v)) c.sweep.ratios.push_back(to_double("sweep.ratios", item));
            },
            [](const RunConfig& c) { return join(c.sweep.ratios, fmt_double); }},
      Field{"sweep", "sizes",
            [](RunConfig& c, std::string_view v) {
              c.sweep.sizes.clear();
              for (auto item : split_list(v)) c.sweep.sizes.push_back(to_size("sweep.sizes", item));
            },
            [](const RunConfig& c) { return join(c.sweep.sizes, fmt_size); }},
      SIZE_FIELD("sweep", "steps", sweep.steps),
      SIZE_FIELD("sweep", "corpus_clips", sweep.corpus_clips),
      SIZE_FIELD("sweep", "probe_clips_per_class", sweep.probe_clips_per_class),
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

}  // namespace

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kSquare: return "square";
    case TrainMode::kVertical: return "vertical";
    case TrainMode::kHybrid: return "hybrid";
    case TrainMode::kMae: return "mae";
  }
  return "square";
}

TrainMode parse_train_mode(std::string_view text) {
  if (text == "square") return TrainMode::kSquare;
  if (text == "vertical") return TrainMode::kVertical;
  if (text == "hybrid") return TrainMode::kHybrid;
  if (text == "mae") return TrainMode::kMae;
  throw ConfigError("train.mode: expected square, vertical, hybrid or mae, got '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ParameterError("train.batch_size must be >= 2");
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw ParameterError("train.mask_ratio must lie in [0, 1)");
  if (!(lr > 0.0)) throw ParameterError("train.lr must be positive");
  if (weight_decay < 0.0) throw ParameterError("train.weight_decay must be non-negative");
  if (!(objective.tau > 0.0)) throw ParameterError("train.tau must be positive");
  if (steps < 1) throw ParameterError("train.steps must be >= 1");
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      bool known = false;
      for (const auto& f : fields()) known = known || section == f.section;
      if (!known) throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" + section + "]");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": key outside of any section");
    cfg.set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void RunConfig::set(std::string_view section, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (section == f.section && key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(section) + "." + std::string(key) + "'");
}

void RunConfig::set(std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  const std::string_view lhs = trim(assignment.substr(0, eq));
  const std::size_t dot = lhs.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form section.key=value");
  }
  set(lhs.substr(0, dot), lhs.substr(dot + 1), trim(assignment.substr(eq + 1)));
}

std::string RunConfig::canonical() const {
  std::string out;
  std::string current;
  for (const auto& f : fields()) {
    if (current != f.section) {
      if (!current.empty()) out += "\n";
      current = f.section;
      out += "[" + current + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(*this) + "\n";
  }
  return out;
}

vit::ModelConfig RunConfig::model_config() const {
  vit::ModelConfig m = model;
  m.spec_rows = audio.mel_bins;
  m.spec_cols = audio.frames;
  switch (train.mode) {
    case TrainMode::kSquare: m.patch_cfgs = {PatchConfig::square()}; break;
    case TrainMode::kVertical: m.patch_cfgs = {PatchConfig::vertical()}; break;
    case TrainMode::kHybrid: m.patch_cfgs = {PatchConfig::square(), PatchConfig::vertical()}; break;
    case TrainMode::kMae: m.patch_cfgs = {PatchConfig::square()}; break;
  }
  m.kind = train.mode == TrainMode::kMae ? vit::ModelKind::kMae : vit::ModelKind::kContrastive;
  return m;
}

void RunConfig::validate() const {
  if (audio.sample_rate != audio::kSampleRate) throw ConfigError("audio.sample_rate must be 16000");
  if (audio.n_fft == 0 || !std::has_single_bit(audio.n_fft)) throw ConfigError("audio.n_fft must be a power of two");
  if (audio.hop == 0 || audio.mel_bins == 0 || audio.frames == 0) {
    throw ConfigError("audio.hop, audio.mel_bins and audio.frames must be positive");
  }
  if (1 + audio::kSegmentSamples / audio.hop < audio.frames) {
    throw ConfigError("audio.frames exceeds the frames available from a 3 s segment");
  }
  if (!(audio.f_min >= 0.0 && audio.f_min < audio.f_max && audio.f_max <= audio.sample_rate / 2.0)) {
    throw ConfigError("audio.f_min/f_max must satisfy 0 <= f_min < f_max <= sample_rate/2");
  }
  if (!(audio.log_floor > 0.0)) throw ConfigError("audio.log_floor must be positive");
  model_config().validate();
  train.validate();

  const auto& g = probe.grid;
  if (g.standardize.empty() || g.model.empty() || g.batch.empty() || g.lr.empty() || g.dropout.empty() || g.l2.empty()) {
    throw ConfigError("probe grid axes must be non-empty");
  }
  for (std::size_t b : g.batch) {
    if (b == 0) throw ParameterError("probe.batch entries must be positive");
  }
  for (double v : g.lr) {
    if (!(v > 0.0)) throw ParameterError("probe.lr entries must be positive");
  }
  for (double v : g.dropout) {
    if (!(v >= 0.0 && v < 1.0)) throw ParameterError("probe.dropout entries must lie in [0, 1)");
  }
  for (double v : g.l2) {
    if (v < 0.0) throw ParameterError("probe.l2 entries must be non-negative");
  }
  if (probe.max_epochs < 1 || probe.patience < 1 || probe.threads < 1) {
    throw ConfigError("probe.max_epochs, probe.patience and probe.threads must be >= 1");
  }
  if (probe.kind != "multiclass" && probe.kind != "multilabel" && probe.kind != "key" && probe.kind != "regression") {
    throw ConfigError("probe.kind must be multiclass, multilabel, key or regression");
  }
  if (probe.representation != "best" && probe.representation != "square" && probe.representation != "vertical" &&
      probe.representation != "concat") {
    throw ConfigError("probe.representation must be best, square, vertical or concat");
  }
  for (double r : sweep.ratios) {
    if (!(r >= 0.0 && r < 1.0)) throw ParameterError("sweep.ratios entries must lie in [0, 1)");
  }
  for (std::size_t b : sweep.sizes) {
    if (b < 2) throw ParameterError("sweep.sizes entries must be >= 2");
  }
  if (sweep.steps < 1 || sweep.corpus_clips < 2 || sweep.probe_clips_per_class < 3) {
    throw ConfigError("sweep.steps >= 1, sweep.corpus_clips >= 2 and sweep.probe_clips_per_class >= 3 required");
  }
}

}  // namespace myna
