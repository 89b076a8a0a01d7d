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

// Acceptance runner: one [PASS]/[FAIL] line per criterion, non-zero exit if
// any criterion fails. `acceptance 4 7` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "gradient_suite.hpp"
#include "metric_oracles.hpp"
#include "myna/commands.hpp"
#include "myna/metrics.hpp"
#include "myna/probe.hpp"
#include "myna/synthetic.hpp"
#include "myna/tensor_io.hpp"
#include "myna/trainer.hpp"
#include "probe_tasks.hpp"

namespace {

using namespace myna;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// Frozen-encoder features for the 4-class synthetic frequency task, probed
// with the linear half of the grid. Returns test accuracy.
double frequency_probe_accuracy(const train::Params& params, const PatchConfig& patch, const audio::MelConfig& mel,
                                std::size_t clips_per_class, std::uint64_t seed) {
  const auto data = synthetic::frequency_task(clips_per_class, 3.0, seed);
  std::vector<float> feats;
  std::vector<std::size_t> splits[3];
  metrics::Matrix labels{data.clips.size(), 1, {}};
  std::size_t dim = 0;
  for (std::size_t i = 0; i < data.clips.size(); ++i) {
    const auto e = train::embed_clip(data.clips[i], params, patch, mel);
    dim = e.size();
    feats.insert(feats.end(), e.begin(), e.end());
    labels.data.push_back(static_cast<double>(data.labels[i]));
    const auto& s = data.splits[i];
    splits[s == "train" ? 0 : s == "valid" ? 1 : 2].push_back(i);
  }
  const probe::Task task(metrics::TaskKind::kMulticlass, data.clips.size(), dim, std::move(feats), std::move(labels),
                         data.num_classes, splits[0], splits[1], splits[2]);
  GridSpec spec;
  spec.model = {"linear"};
  probe::GridOptions opts;
  opts.threads = 4;
  opts.seed = seed;
  return probe::run_grid(task, probe::enumerate_grid(spec), opts).test_metrics.at("accuracy");
}

// ---------------------------------------------------------------------------

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  double worst_op = 0.0;
  std::string worst_name;
  for (std::uint64_t seed : {7u, 21u, 99u}) {
    for (const auto& c : testing::op_gradient_cases(seed)) {
      if (c.error > worst_op) {
        worst_op = c.error;
        worst_name = c.name;
      }
    }
  }
  double worst_e2e = 0.0;
  for (std::uint64_t seed : {5u, 6u, 7u}) worst_e2e = std::max(worst_e2e, testing::infonce_pipeline_error(seed, 8));
  const double secs = seconds_since(t0);
  return {worst_op < 1e-3 && worst_e2e < 1e-2 && secs < 120.0,
          "ops max rel err " + num(worst_op, 3) + " (" + worst_name + "), InfoNCE pipeline " + num(worst_e2e, 3) +
              ", " + num(secs, 3) + " s"};
}

Verdict closed_form_loss() {
  using TF = ad::Tensor<float>;
  double worst = 0.0;
  for (std::size_t n : {2u, 4u, 16u}) {
    std::vector<float> v(n * 8, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
      v[i * 8 + 0] = 0.6f;
      v[i * 8 + 1] = 0.8f;
    }
    const auto z = TF::from({n, 8}, v);
    worst = std::max(worst, std::abs(objectives::info_nce(z, z, {}).item() - std::log(2.0 * n - 2.0)));
  }
  const auto e = TF::from({2, 2}, {1, 0, 0, 1});
  const double aligned = std::abs(objectives::info_nce(e, e, {}).item() + (10.0 - std::log(2.0)));
  return {worst <= 1e-5 && aligned <= 1e-4,
          "identical-batch max |err| " + num(worst, 3) + ", aligned/orthogonal |err| " + num(aligned, 3)};
}

Verdict hybrid_exactness() {
  const auto cfg = testing::tiny_model(true);
  const auto params = vit::init_params(cfg, 11);
  const auto views = testing::tiny_views(cfg, 3, 0.5, 12);
  const objectives::ObjectiveConfig obj;
  auto branch = [&](auto& p, std::size_t b) {
    using T = typename std::decay_t<decltype(p)>::value_type;
    return train::contrastive_branch_loss<T>(views[b], cfg.patch_cfgs[b], p, obj);
  };

  // Value: hybrid vs arithmetic mean, in float64 (a float32 ulp near the
  // loss values exceeds the tolerance) and in float32 against a float32 mean.
  auto pd = vit::cast_params<double>(params, false);
  const auto lsd = branch(pd, 0), lvd = branch(pd, 1);
  const double value_err = std::abs(objectives::hybrid_loss(lsd, lvd).item() - (lsd.item() + lvd.item()) / 2.0);
  auto pf = vit::cast_params<float>(params, false);
  const auto lsf = branch(pf, 0), lvf = branch(pf, 1);
  const double value_err_f32 = std::abs(objectives::hybrid_loss(lsf, lvf).item() - (lsf.item() + lvf.item()) / 2.0f);

  // Gradients of every shared encoder tensor: hybrid vs mean of branches.
  auto grads = [&](const std::function<ad::Tensor<float>(vit::ModelParams<float>&)>& f) {
    auto q = vit::cast_params<float>(params, true);
    q.zero_grad();
    ad::backward(f(q));
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, t] : q.tensors) out[name].assign(t.grad().begin(), t.grad().end());
    return out;
  };
  const auto gs = grads([&](auto& q) { return branch(q, 0); });
  const auto gv = grads([&](auto& q) { return branch(q, 1); });
  const auto gh = grads([&](auto& q) { return objectives::hybrid_loss(branch(q, 0), branch(q, 1)); });
  std::vector<double> a, b;
  for (const auto& [name, g] : gh) {
    if (name.rfind("enc.", 0) != 0) continue;
    for (std::size_t i = 0; i < g.size(); ++i) {
      a.push_back(g[i]);
      b.push_back(0.5 * (gs.at(name)[i] + gv.at(name)[i]));
    }
  }
  const double grad_err = testing::relative_error(a, b);
  const double fd_err = testing::model_gradient_error(
      [&](const auto& q) {
        using T = typename std::decay_t<decltype(q)>::value_type;
        return objectives::hybrid_loss(train::contrastive_branch_loss<T>(views[0], cfg.patch_cfgs[0], q, obj),
                                       train::contrastive_branch_loss<T>(views[1], cfg.patch_cfgs[1], q, obj));
      },
      params, 6, 13);
  return {value_err <= 1e-7 && value_err_f32 == 0.0 && grad_err <= 1e-3 && fd_err < 1e-2,
          "|hybrid - mean| " + num(value_err, 3) + " (f64), " + num(value_err_f32, 3) + " (f32), encoder grad rel err " + num(grad_err, 3) +
              ", finite-difference rel err " + num(fd_err, 3)};
}

Verdict masking_efficiency() {
  const auto t0 = Clock::now();
  RunConfig rc;
  const vit::ModelConfig cfg = rc.model_config();  // desk default
  const auto params = vit::init_params(cfg, 21);
  const auto corpus = synthetic::sine_mixture_corpus(16, 3.0, 22);
  std::vector<const audio::AudioClip*> batch;
  for (const auto& c : corpus) batch.push_back(&c);
  Rng rng = derive_rng(23, 0);
  const auto specs = train::make_spectrogram_pairs(batch, rc.audio, rng);

  // Median model time (tokenize, encode, loss, backward) over repetitions.
  auto time_ratio = [&](double ratio) {
    std::vector<double> ms;
    for (int rep = 0; rep < 5; ++rep) {
      const auto views = train::mask_views(specs, cfg.patch_cfgs[0], ratio, rng);
      auto p = vit::cast_params<float>(params, true);
      const auto t = Clock::now();
      ad::backward(train::contrastive_branch_loss<float>(views, cfg.patch_cfgs[0], p, rc.train.objective));
      ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t).count());
    }
    std::sort(ms.begin(), ms.end());
    return ms[ms.size() / 2];
  };
  time_ratio(0.9);  // warm-up
  const double t90 = time_ratio(0.9), t0r = time_ratio(0.0);
  const double flop_ratio = vit::flop_estimate(cfg, 5) / vit::flop_estimate(cfg, 48);
  const double secs = seconds_since(t0);
  return {t90 < 0.4 * t0r && flop_ratio < 0.12 && secs < 300.0,
          "fwd+bwd " + num(t90, 4) + " ms (r=0.9) vs " + num(t0r, 4) + " ms (r=0), ratio " + num(t90 / t0r, 3) +
              "; flop ratio " + num(flop_ratio, 3) + "; " + num(secs, 3) + " s"};
}

RunConfig learning_config(std::uint64_t seed) {
  RunConfig rc;
  rc.train.batch_size = 16;
  rc.train.steps = 300;
  rc.train.lr = 1e-3;
  rc.train.seed = seed;
  rc.validate();
  return rc;
}

Verdict learning_signal() {
  const auto t0 = Clock::now();
  const RunConfig rc = learning_config(31);
  const auto corpus = synthetic::sine_mixture_corpus(8, 4.0, 31);
  train::Trainer trainer(rc, corpus);
  double first = 0.0, last = 0.0;
  while (trainer.steps_done() < rc.train.steps) {
    const double l = trainer.step().loss;
    if (trainer.steps_done() <= 20) first += l / 20.0;
    if (trainer.steps_done() > rc.train.steps - 20) last += l / 20.0;
  }
  Rng rng = derive_rng(32, 0);
  const auto patch = rc.model_config().patch_cfgs[0];
  train::Alignment al;
  for (int rep = 0; rep < 4; ++rep) {
    const auto a = train::measure_alignment(corpus, trainer.params(), patch, rc.train.mask_ratio, rc.audio, rng);
    al.positive += a.positive / 4.0;
    al.negative += a.negative / 4.0;
  }
  const double acc = frequency_probe_accuracy(trainer.params(), patch, rc.audio, 12, 33);
  const double secs = seconds_since(t0);
  return {al.gap() >= 0.2 && acc >= 0.5 && secs < 600.0,
          "loss " + num(first) + " -> " + num(last) + "; cos pos " + num(al.positive, 3) + " neg " +
              num(al.negative, 3) + " gap " + num(al.gap(), 3) + "; probe acc " + num(acc, 3) +
              " (chance 0.25); " + num(secs, 3) + " s"};
}

Verdict masking_ratio_trend() {
  const auto t0 = Clock::now();
  double acc_hi = 0.0, acc_lo = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : {41u, 42u, 43u}) {
    RunConfig rc = learning_config(seed);
    rc.sweep.steps = 100;
    rc.sweep.corpus_clips = 8;
    rc.sweep.probe_clips_per_class = 24;
    rc.train.mask_ratio = 0.9;
    const double hi = cli::sweep_point(rc).probe_metric;
    rc.train.mask_ratio = 0.1;
    const double lo = cli::sweep_point(rc).probe_metric;
    acc_hi += hi / 3.0;
    acc_lo += lo / 3.0;
    per_seed += " " + num(hi, 3) + "/" + num(lo, 3);
  }
  return {acc_hi >= acc_lo - 0.05, "mean probe acc r=0.9 " + num(acc_hi, 3) + " vs r=0.1 " + num(acc_lo, 3) +
                                      " (per seed" + per_seed + "); " + num(seconds_since(t0), 3) + " s"};
}

Verdict grid_protocol() {
  const auto grid = probe::enumerate_grid();
  std::set<std::tuple<bool, std::string, std::size_t, double, double, double>> unique;
  for (const auto& c : grid) unique.insert({c.standardize, c.model, c.batch, c.lr, c.dropout, c.l2});
  const probe::Task task = testing::separable_task(100, 8, 71);
  probe::GridOptions opts;
  opts.threads = 4;
  const auto r = probe::run_grid(task, grid, opts);
  const double acc = r.test_metrics.at("accuracy");
  return {grid.size() == 216 && unique.size() == 216 && acc == 1.0 && r.test_reads_during_selection == 0,
          std::to_string(grid.size()) + " configs (" + std::to_string(unique.size()) + " unique); test acc " +
              num(acc) + "; test-label reads during selection " + std::to_string(r.test_reads_during_selection)};
}

Verdict metric_oracles() {
  Rng rng = derive_rng(81, 0);
  double auc_err = 0.0, ap_err = 0.0;
  std::size_t key_mismatch = 0, r2_mismatch = 0, presence_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 20);
    auto [s, y] = testing::random_scored_labels(n, rng);
    const auto auc = metrics::roc_auc(s, y), bauc = testing::brute_auc(s, y);
    const auto ap = metrics::average_precision(s, y), bap = testing::brute_ap(s, y);
    presence_mismatch += (auc.has_value() != bauc.has_value()) + (ap.has_value() != bap.has_value());
    if (auc && bauc) auc_err = std::max(auc_err, std::abs(*auc - *bauc));
    if (ap && bap) ap_err = std::max(ap_err, std::abs(*ap - *bap));

    std::vector<std::size_t> est(n), ref(n);
    for (std::size_t i = 0; i < n; ++i) {
      est[i] = static_cast<std::size_t>(uniform01(rng) * 24);
      ref[i] = uniform01(rng) < 0.5 ? est[i] : static_cast<std::size_t>(uniform01(rng) * 24);
    }
    key_mismatch += metrics::weighted_key_score(est, ref) != testing::brute_weighted_key(est, ref);

    std::vector<double> p(n + 1), t(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      p[i] = 2.0 * uniform01(rng) - 1.0;
      t[i] = 2.0 * uniform01(rng) - 1.0;
    }
    r2_mismatch += metrics::r2_score(p, t) != testing::brute_r2(p, t);
  }
  return {auc_err <= 1e-9 && ap_err <= 1e-9 && key_mismatch == 0 && r2_mismatch == 0 && presence_mismatch == 0,
          "200 trials: max |AUC err| " + num(auc_err, 3) + ", max |AP err| " + num(ap_err, 3) + ", key mismatches " +
              std::to_string(key_mismatch) + ", R2 mismatches " + std::to_string(r2_mismatch)};
}

Verdict parameter_parity() {
  const auto params = vit::init_params(vit::ModelConfig::vit_small(), 91);
  const double n = static_cast<double>(params.parameter_count());
  return {std::abs(n - 22e6) <= 0.1 * 22e6, "ViT-S preset " + num(n / 1e6, 4) + "M parameters (target 22M +-10%)"};
}

Verdict persistence() {
  testing::TempDir dir;
  RunConfig rc = learning_config(101);
  rc.set("train.mode=hybrid");
  rc.validate();
  const auto corpus = synthetic::sine_mixture_corpus(8, 4.0, 101);
  train::Trainer straight(rc, corpus);
  for (int i = 0; i < 3; ++i) straight.step();
  const auto ckpt = straight.checkpoint();
  train::save_checkpoint(dir / "a.ckpt", ckpt);
  const auto loaded = train::load_checkpoint(dir / "a.ckpt");
  bool exact = loaded.step == ckpt.step && loaded.adam == ckpt.adam &&
               loaded.config.canonical() == ckpt.config.canonical() &&
               loaded.params.tensors.size() == ckpt.params.tensors.size();
  for (const auto& [name, t] : ckpt.params.tensors) {
    const auto x = t.data(), y = loaded.params.at(name).data();
    exact = exact && x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0;
  }
  train::save_checkpoint(dir / "b.ckpt", loaded);
  auto bytes = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  exact = exact && bytes(dir / "a.ckpt") == bytes(dir / "b.ckpt");
  const double expected = straight.step().loss;
  train::Trainer resumed(train::load_checkpoint(dir / "a.ckpt"), corpus);
  const double diff = std::abs(resumed.step().loss - expected);
  return {exact && diff <= 1e-6,
          std::string("round trip ") + (exact ? "bit-exact" : "NOT exact") + "; resumed next-step |dloss| " +
              num(diff, 3)};
}

Verdict mae_baseline() {
  const auto t0 = Clock::now();
  testing::TempDir dir;
  RunConfig rc = learning_config(111);
  rc.set("train.mode=mae");
  rc.validate();
  const auto corpus = synthetic::sine_mixture_corpus(8, 4.0, 111);
  train::Trainer trainer(rc, corpus);
  std::vector<double> losses;
  while (trainer.steps_done() < rc.train.steps) losses.push_back(trainer.step().loss);
  const std::size_t w = 50;
  double lead = 0.0, trail = 0.0;
  for (std::size_t i = 0; i < w; ++i) {
    lead += losses[i] / w;
    trail += losses[losses.size() - w + i] / w;
  }
  train::save_checkpoint(dir / "mae.ckpt", trainer.checkpoint());
  const auto manifest = synthetic::write_corpus(dir / "clips", {corpus[0], corpus[1]});
  std::ostringstream sink;
  cli::cmd_mae_dump(dir / "mae.ckpt", manifest, dir / "dump", rc.train.mask_ratio, 112, sink);

  std::size_t checked = 0, mismatched = 0;
  for (const char* name : {"clip_000.tensors", "clip_001.tensors"}) {
    const auto t = io::read_table(dir / "dump" / name);
    const auto& in = t.at("input");
    const auto& ov = t.at("overlay");
    const std::size_t cols = in.shape[1];
    const PatchConfig patch = rc.model_config().patch_cfgs[0];
    const std::size_t grid_cols = cols / patch.patch_w;
    for (float k : t.at("kept").data) {
      const auto idx = static_cast<std::size_t>(k);
      const std::size_t r0 = (idx / grid_cols) * patch.patch_h, c0 = (idx % grid_cols) * patch.patch_w;
      for (std::size_t r = r0; r < r0 + patch.patch_h; ++r) {
        for (std::size_t c = c0; c < c0 + patch.patch_w; ++c) {
          ++checked;
          mismatched += std::memcmp(&in.data[r * cols + c], &ov.data[r * cols + c], sizeof(float)) != 0;
        }
      }
    }
  }
  return {trail < lead && checked > 0 && mismatched == 0,
          "masked MSE leading mean " + num(lead) + " -> trailing mean " + num(trail) + "; overlay " +
              std::to_string(checked - mismatched) + "/" + std::to_string(checked) + " kept pixels exact; " +
              num(seconds_since(t0), 3) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"closed-form loss", closed_form_loss},
      {"hybrid exactness", hybrid_exactness},
      {"masking efficiency", masking_efficiency},
      {"learning signal", learning_signal},
      {"masking-ratio trend", masking_ratio_trend},
      {"probe grid protocol", grid_protocol},
      {"metric oracles", metric_oracles},
      {"parameter-count parity", parameter_parity},
      {"persistence", persistence},
      {"MAE baseline", mae_baseline},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(static_cast<std::size_t>(std::stoul(argv[i])));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << i + 1 << ' ' << criteria[i].first << ": " << v.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
