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

#include "myna/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "myna/error.hpp"
#include "myna/metrics.hpp"
#include "myna/synthetic.hpp"
#include "myna/tensor_io.hpp"

namespace myna::cli {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

bool parse_number(std::string_view text, double& out) {
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

// Per-representation embeddings of one clip.
std::map<std::string, std::vector<float>> embed_all(const audio::AudioClip& clip, const train::Params& params,
                                                    const audio::MelConfig& mel) {
  std::map<std::string, std::vector<float>> out;
  std::vector<float> concat;
  for (const auto& pc : params.config.patch_cfgs) {
    auto e = train::embed_clip(clip, params, pc, mel);
    concat.insert(concat.end(), e.begin(), e.end());
    if (params.config.patch_cfgs.size() > 1) out["features." + pc.name] = std::move(e);
  }
  out["features"] = std::move(concat);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_file_atomic(path, text);
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParameterError*>(&e) ||
      dynamic_cast<const BatchSizeError*>(&e)) {
    return kConfigExit;
  }
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const TooShortError*>(&e) ||
      dynamic_cast<const FormatError*>(&e) || dynamic_cast<const CorruptionError*>(&e) ||
      dynamic_cast<const UnsupportedError*>(&e)) {
    return kDataExit;
  }
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const TaskError*>(&e)) return kValidationExit;
  if (dynamic_cast<const NumericError*>(&e)) return kNumericExit;
  return kFailure;
}

RunConfig resolve_config(const std::optional<fs::path>& config_file, const std::vector<std::string>& sets,
                         std::optional<std::uint64_t> seed) {
  RunConfig cfg = config_file ? RunConfig::load(*config_file) : RunConfig{};
  for (const auto& s : sets) cfg.set(s);
  if (seed) cfg.train.seed = *seed;
  cfg.validate();
  return cfg;
}

std::vector<audio::AudioClip> load_manifest_clips(const fs::path& manifest) {
  std::vector<audio::AudioClip> clips;
  for (const auto& entry : audio::read_manifest(manifest)) clips.push_back(audio::load_clip(entry.path));
  return clips;
}

double cmd_pretrain(const RunConfig& cfg, const PretrainOptions& opts, std::ostream& out) {
  std::vector<audio::AudioClip> corpus = load_manifest_clips(opts.manifest);
  std::optional<train::Trainer> trainer;
  if (opts.resume) {
    train::Checkpoint ckpt = train::load_checkpoint(*opts.resume);
    // Extending a run: only the step budget may change.
    ckpt.config.train.steps = cfg.train.steps;
    if (ckpt.config.canonical() != cfg.canonical()) {
      out << "note: resuming with the checkpoint's configuration; only train.steps comes from the command line\n";
    }
    trainer.emplace(std::move(ckpt), std::move(corpus));
  } else {
    trainer.emplace(cfg, std::move(corpus));
  }
  if (trainer->skipped_clips() > 0) out << "skipped " << trainer->skipped_clips() << " clip(s) shorter than 3 s\n";

  fs::path log_path = opts.log.value_or(fs::path(opts.out.string() + ".log.csv"));
  if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
  const bool fresh = !fs::exists(log_path) || fs::file_size(log_path) == 0;
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw DataError("cannot open training log " + log_path.string());
  if (fresh) log << "step,loss,lr,tokens_kept,wall_ms\n";

  const RunConfig& run = trainer->config();
  double last = std::nan("");
  while (trainer->steps_done() < run.train.steps) {
    const train::StepStats s = trainer->step();
    last = s.loss;
    log << trainer->steps_done() << ',' << fmt(s.loss) << ',' << fmt(run.train.lr) << ',' << s.tokens_kept << ','
        << fmt(s.wall_ms) << '\n';
  }
  log.flush();
  if (opts.out.has_parent_path()) fs::create_directories(opts.out.parent_path());
  train::save_checkpoint(opts.out, trainer->checkpoint());
  out << "final loss " << fmt(last) << " after " << trainer->steps_done() << " steps\n";
  return last;
}

void cmd_embed(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out_features, std::ostream& out) {
  const train::Checkpoint ckpt = train::load_checkpoint(checkpoint);
  const auto entries = audio::read_manifest(manifest);
  if (entries.empty()) throw DataError("manifest " + manifest.string() + " lists no clips");

  // Labels: numeric columns pass through, names map to sorted indices.
  bool numeric = true;
  std::size_t width = 0;
  std::set<std::string> names;
  for (const auto& e : entries) {
    if (e.label.empty()) continue;
    names.insert(e.label);
    const auto parts = split_commas(e.label);
    double v;
    for (const auto& p : parts) numeric = numeric && parse_number(p, v);
    width = std::max(width, parts.size());
  }
  if (names.empty()) width = 1;
  if (!numeric) width = 1;
  std::map<std::string, double> name_index;
  for (const auto& n : names) name_index.emplace(n, static_cast<double>(name_index.size()));

  metrics::Matrix labels{entries.size(), width, std::vector<double>(entries.size() * width, 0.0)};
  std::vector<std::size_t> splits[3];
  std::map<std::string, std::vector<float>> features;
  std::map<std::string, std::size_t> dims;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (!e.label.empty()) {
      if (numeric) {
        const auto parts = split_commas(e.label);
        if (parts.size() != width) throw DataError("label width differs at manifest row " + std::to_string(i));
        for (std::size_t c = 0; c < width; ++c) parse_number(parts[c], labels.data[i * width + c]);
      } else {
        labels.data[i] = name_index.at(e.label);
      }
    }
    const std::string split = e.split.empty() ? "train" : e.split;
    if (split == "train") {
      splits[0].push_back(i);
    } else if (split == "valid") {
      splits[1].push_back(i);
    } else if (split == "test") {
      splits[2].push_back(i);
    } else {
      throw ValidationError("unknown split '" + split + "' at manifest row " + std::to_string(i));
    }
    for (auto& [name, vec] : embed_all(audio::load_clip(e.path), ckpt.params, ckpt.config.audio)) {
      dims[name] = vec.size();
      auto& dst = features[name];
      dst.insert(dst.end(), vec.begin(), vec.end());
    }
  }
  io::TensorTable table = probe::feature_table(features.at("features"), dims.at("features"), labels, splits[0],
                                               splits[1], splits[2], ckpt.config.canonical());
  for (const auto& [name, data] : features) {
    if (name == "features") continue;
    table.add(name, {entries.size(), dims.at(name)}, data);
  }
  if (out_features.has_parent_path()) fs::create_directories(out_features.parent_path());
  io::write_table(out_features, table);
  out << "wrote " << entries.size() << " x " << dims.at("features") << " features to " << out_features.string()
      << '\n';
}

probe::ProbeResult cmd_probe(const RunConfig& cfg, const fs::path& features, const fs::path& out_csv,
                             std::ostream& out) {
  const io::TensorTable table = io::read_table(features);
  const metrics::TaskKind kind = metrics::parse_task_kind(cfg.probe.kind);
  const std::string& rep = cfg.probe.representation;
  std::vector<std::pair<std::string, std::string>> candidates;  // (label, tensor name)
  if (rep == "best") {
    for (const char* r : {"square", "vertical"}) {
      if (table.find(std::string("features.") + r)) candidates.emplace_back(r, std::string("features.") + r);
    }
    candidates.emplace_back(candidates.empty() ? "single" : "concat", "features");
  } else if (rep == "concat") {
    candidates.emplace_back("concat", "features");
  } else {
    const std::string name = "features." + rep;
    candidates.emplace_back(rep, table.find(name) ? name : "features");
  }

  probe::GridOptions options;
  options.limits.max_epochs = cfg.probe.max_epochs;
  options.limits.patience = cfg.probe.patience;
  options.threads = cfg.probe.threads;
  options.seed = cfg.train.seed;
  const auto grid = probe::enumerate_grid(cfg.probe.grid);

  std::optional<probe::ProbeResult> best;
  std::string best_rep;
  for (const auto& [label, tensor] : candidates) {
    const probe::Task task = probe::task_from_table(table, kind, tensor);
    probe::ProbeResult r = probe::run_grid(task, grid, options);
    out << "representation " << label << ": valid " << metrics::primary_metric(kind) << ' ' << fmt(r.valid_metric)
        << '\n';
    // Chosen on validation only; earlier candidates win ties.
    if (!best || r.valid_metric > best->valid_metric) {
      best = std::move(r);
      best_rep = label;
    }
  }
  write_text(out_csv, probe::results_csv(*best));
  const auto& c = best->best;
  out << "winner [" << best_rep << "] config " << best->best_index << ": standardize=" << (c.standardize ? "on" : "off")
      << " model=" << c.model << " batch=" << c.batch << " lr=" << fmt(c.lr) << " dropout=" << fmt(c.dropout)
      << " l2=" << fmt(c.l2) << " valid=" << fmt(best->valid_metric) << '\n';
  for (const auto& [name, value] : best->test_metrics) out << "  test " << name << " = " << fmt(value) << '\n';
  return *best;
}

SweepRow sweep_point(const RunConfig& cfg) {
  RunConfig run = cfg;
  run.train.steps = cfg.sweep.steps;
  run.validate();
  train::Trainer trainer(run, synthetic::sine_mixture_corpus(cfg.sweep.corpus_clips, 4.0, cfg.train.seed));
  std::vector<double> losses;
  double wall = 0.0;
  while (trainer.steps_done() < run.train.steps) {
    const auto s = trainer.step();
    losses.push_back(s.loss);
    wall += s.wall_ms;
  }
  SweepRow row;
  const std::size_t tail = std::min<std::size_t>(20, losses.size());
  for (std::size_t i = losses.size() - tail; i < losses.size(); ++i) row.loss += losses[i] / static_cast<double>(tail);
  row.step_wall_ms = losses.empty() ? 0.0 : wall / static_cast<double>(losses.size());

  const vit::ModelConfig mc = run.model_config();
  const double views = mc.kind == vit::ModelKind::kMae ? 1.0 : 2.0;
  for (const auto& pc : mc.patch_cfgs) {
    const std::size_t total = (mc.spec_rows / pc.patch_h) * (mc.spec_cols / pc.patch_w);
    row.flops_per_step += views * static_cast<double>(run.train.batch_size) *
                          vit::flop_estimate(mc, kept_token_count(total, run.train.mask_ratio));
  }

  // Fixed probe task and a single fixed probe cell so rows are comparable.
  const auto task_clips = synthetic::frequency_task(cfg.sweep.probe_clips_per_class, 3.0, cfg.train.seed + 1);
  std::vector<float> feats;
  std::size_t dim = 0;
  std::vector<std::size_t> splits[3];
  metrics::Matrix labels{task_clips.clips.size(), 1, {}};
  for (std::size_t i = 0; i < task_clips.clips.size(); ++i) {
    auto e = embed_all(task_clips.clips[i], trainer.params(), run.audio).at("features");
    dim = e.size();
    feats.insert(feats.end(), e.begin(), e.end());
    labels.data.push_back(static_cast<double>(task_clips.labels[i]));
    const auto& s = task_clips.splits[i];
    splits[s == "train" ? 0 : s == "valid" ? 1 : 2].push_back(i);
  }
  const probe::Task task(metrics::TaskKind::kMulticlass, task_clips.clips.size(), dim, std::move(feats),
                         std::move(labels), task_clips.num_classes, splits[0], splits[1], splits[2]);
  probe::GridOptions options;
  options.limits.max_epochs = cfg.probe.max_epochs;
  options.limits.patience = cfg.probe.patience;
  options.seed = cfg.train.seed;
  const std::vector<probe::ProbeConfig> cell{probe::ProbeConfig{true, "linear", 64, 1e-3, 0.25, 0.0}};
  row.probe_metric = probe::run_grid(task, cell, options).test_metrics.at("accuracy");
  return row;
}

namespace {

std::vector<SweepRow> write_sweep(const std::string& first_column, std::vector<SweepRow> rows,
                                  const fs::path& out_csv, std::ostream& out) {
  std::ostringstream csv;
  csv << first_column << ",loss,probe_metric,step_wall_ms,flops_per_step\n";
  for (const auto& r : rows) {
    csv << fmt(r.value) << ',' << fmt(r.loss) << ',' << fmt(r.probe_metric) << ',' << fmt(r.step_wall_ms) << ','
        << fmt(r.flops_per_step) << '\n';
  }
  write_text(out_csv, csv.str());
  out << csv.str();
  return rows;
}

}  // namespace

std::vector<SweepRow> cmd_sweep_mask(const RunConfig& cfg, const fs::path& out_csv, std::ostream& out) {
  for (double r : cfg.sweep.ratios) {
    if (!(r >= 0.0 && r < 1.0)) throw ParameterError("sweep ratio " + fmt(r) + " outside [0, 1)");
  }
  std::vector<SweepRow> rows;
  for (double r : cfg.sweep.ratios) {
    RunConfig run = cfg;
    run.train.mask_ratio = r;
    SweepRow row = sweep_point(run);
    row.value = r;
    rows.push_back(row);
  }
  return write_sweep("ratio", std::move(rows), out_csv, out);
}

std::vector<SweepRow> cmd_sweep_batch(const RunConfig& cfg, const fs::path& out_csv, std::ostream& out) {
  for (std::size_t b : cfg.sweep.sizes) {
    if (b < 2) throw ParameterError("sweep batch size " + std::to_string(b) + " is below 2");
  }
  std::vector<SweepRow> rows;
  for (std::size_t b : cfg.sweep.sizes) {
    RunConfig run = cfg;
    run.train.batch_size = b;
    SweepRow row = sweep_point(run);
    row.value = static_cast<double>(b);
    rows.push_back(row);
  }
  return write_sweep("batch", std::move(rows), out_csv, out);
}

MaeImages mae_images(const audio::AudioClip& clip, const train::Params& params, double mask_ratio, Rng& rng,
                     const audio::MelConfig& mel) {
  if (params.config.kind != vit::ModelKind::kMae) throw ConfigError("checkpoint has no MAE decoder");
  const auto windows = audio::split_windows(clip.sample_rate == audio::kSampleRate
                                                ? clip
                                                : audio::resample(clip, audio::kSampleRate));
  const auto spec = audio::standardize(audio::mel_spectrogram(windows.front(), mel));
  MaeImages img;
  img.patch = params.config.patch_cfgs.front();
  const PatchGrid grid = patchify(spec, img.patch);
  img.tokens = sample_mask(grid, mask_ratio, rng);
  img.rows = spec.mel_bins;
  img.cols = spec.frames;

  ad::NoGradGuard no_grad;
  const auto recon = vit::mae_forward<float>(img.tokens, grid.count(), params);
  img.input.resize(img.rows * img.cols);
  img.reconstruction.resize(img.rows * img.cols);
  for (std::size_t b = 0; b < img.rows; ++b)
    for (std::size_t f = 0; f < img.cols; ++f) img.input[b * img.cols + f] = spec.at(b, f);

  std::vector<unsigned char> kept(grid.count(), 0);
  for (std::size_t k : img.tokens.kept_indices) kept[k] = 1;
  img.overlay = img.input;
  const std::size_t ph = img.patch.patch_h, pw = img.patch.patch_w;
  for (std::size_t p = 0; p < grid.count(); ++p) {
    const GridCoord c = grid.coords[p];
    for (std::size_t i = 0; i < ph; ++i) {
      for (std::size_t j = 0; j < pw; ++j) {
        const std::size_t pix = (c.row * ph + i) * img.cols + c.col * pw + j;
        const float v = recon.at(p, i * pw + j);
        img.reconstruction[pix] = v;
        if (!kept[p]) img.overlay[pix] = v;
      }
    }
  }
  return img;
}

std::string encode_pgm(const std::vector<float>& image, std::size_t rows, std::size_t cols) {
  if (image.size() != rows * cols) throw ShapeError("encode_pgm: image size does not match rows x cols");
  const auto [lo_it, hi_it] = std::minmax_element(image.begin(), image.end());
  const double lo = image.empty() ? 0.0 : *lo_it, hi = image.empty() ? 0.0 : *hi_it;
  std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t src = rows - 1 - r;  // highest bin on top
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = hi > lo ? (image[src * cols + c] - lo) / (hi - lo) : 0.0;
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  return out;
}

void cmd_mae_dump(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out_dir, double mask_ratio,
                  std::uint64_t seed, std::ostream& out) {
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw ParameterError("mask ratio must lie in [0, 1)");
  const train::Checkpoint ckpt = train::load_checkpoint(checkpoint);
  if (ckpt.params.config.kind != vit::ModelKind::kMae) {
    throw ConfigError(checkpoint.string() + ": checkpoint lacks an MAE decoder");
  }
  const auto entries = audio::read_manifest(manifest);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Rng rng = derive_rng(seed, i);
    const MaeImages img = mae_images(audio::load_clip(entries[i].path), ckpt.params, mask_ratio, rng, ckpt.config.audio);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "clip_%03zu", i);
    const std::string s(stem);
    io::write_file_atomic(out_dir / (s + "_input.pgm"), encode_pgm(img.input, img.rows, img.cols));
    io::write_file_atomic(out_dir / (s + "_recon.pgm"), encode_pgm(img.reconstruction, img.rows, img.cols));
    io::write_file_atomic(out_dir / (s + "_overlay.pgm"), encode_pgm(img.overlay, img.rows, img.cols));
    io::TensorTable table;
    table.add("input", {img.rows, img.cols}, img.input);
    table.add("reconstruction", {img.rows, img.cols}, img.reconstruction);
    table.add("overlay", {img.rows, img.cols}, img.overlay);
    table.add("kept", {img.tokens.kept()},
              std::vector<float>(img.tokens.kept_indices.begin(), img.tokens.kept_indices.end()));
    io::write_table(out_dir / (s + ".tensors"), table);
  }
  out << "wrote " << entries.size() << " clip dump(s) to " << out_dir.string() << '\n';
}

fs::path cmd_synth(const std::string& kind, std::size_t count, double seconds, std::uint64_t seed,
                   const fs::path& out_dir) {
  if (kind == "mixtures") return synthetic::write_corpus(out_dir, synthetic::sine_mixture_corpus(count, seconds, seed));
  if (kind == "tones") {
    const auto task = synthetic::frequency_task(count, seconds, seed);
    std::vector<std::string> labels;
    for (std::size_t l : task.labels) labels.push_back(std::to_string(l));
    return synthetic::write_corpus(out_dir, task.clips, labels, task.splits);
  }
  throw ConfigError("synth kind must be 'mixtures' or 'tones'");
}

}  // namespace myna::cli
