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

// myna: pre-training, embedding export, probing, sweeps and MAE dumps.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "myna/commands.hpp"
#include "myna/error.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  std::string out;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* config_opt = nullptr;

  void attach(CLI::App* cmd, bool out_required = true) {
    config_opt = cmd->add_option("--config", config, "Config file ([section] / key = value lines)")
                     ->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "Override, section.key=value (repeatable)")->allow_extra_args(false);
    seed_opt = cmd->add_option("--seed", seed, "Overrides train.seed");
    auto* o = cmd->add_option("--out", out, "Output path");
    if (out_required) o->required();
  }

  myna::RunConfig resolve(std::vector<std::string> extra = {}) const {
    std::vector<std::string> all = sets;
    all.insert(all.end(), extra.begin(), extra.end());
    std::optional<std::filesystem::path> file;
    if (*config_opt) file = config;
    std::optional<std::uint64_t> s;
    if (*seed_opt) s = seed;
    return myna::cli::resolve_config(file, all, s);
  }
};

}  // namespace

int main(int argc, char** argv) {
  namespace cli = myna::cli;
  CLI::App app{"myna: masked contrastive pre-training for music spectrograms"};
  app.require_subcommand(1);

  Common pre_c;
  std::string pre_manifest, pre_log, pre_resume;
  auto* pre = app.add_subcommand("pretrain", "Contrastive pre-training (square / vertical / hybrid)");
  pre_c.attach(pre);
  pre->add_option("--manifest", pre_manifest, "Clip manifest")->required();
  pre->add_option("--log", pre_log, "Training log CSV (default <out>.log.csv)");
  pre->add_option("--resume", pre_resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  Common mae_c;
  std::string mae_manifest, mae_log, mae_resume;
  auto* mae = app.add_subcommand("mae-pretrain", "Masked-autoencoder baseline pre-training");
  mae_c.attach(mae);
  mae->add_option("--manifest", mae_manifest, "Clip manifest")->required();
  mae->add_option("--log", mae_log, "Training log CSV (default <out>.log.csv)");
  mae->add_option("--resume", mae_resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  Common emb_c;
  std::string emb_ckpt, emb_manifest;
  auto* emb = app.add_subcommand("embed", "Export clip embeddings as a feature file");
  emb_c.attach(emb);
  emb->add_option("--checkpoint", emb_ckpt)->required()->check(CLI::ExistingFile);
  emb->add_option("--manifest", emb_manifest)->required()->check(CLI::ExistingFile);

  Common prb_c;
  std::string prb_features;
  auto* prb = app.add_subcommand("probe", "Grid-searched probe on a feature file; writes results CSV");
  prb_c.attach(prb);
  prb->add_option("--features", prb_features)->required()->check(CLI::ExistingFile);

  Common swm_c;
  std::string swm_ratios;
  auto* swm = app.add_subcommand("sweep-mask", "Masking-ratio sweep on the synthetic corpus");
  swm_c.attach(swm);
  swm->add_option("--ratios", swm_ratios, "Comma-separated ratios (sets sweep.ratios)");

  Common swb_c;
  std::string swb_sizes;
  auto* swb = app.add_subcommand("sweep-batch", "Batch-size sweep on the synthetic corpus");
  swb_c.attach(swb);
  swb->add_option("--sizes", swb_sizes, "Comma-separated batch sizes (sets sweep.sizes)");

  Common dmp_c;
  std::string dmp_ckpt, dmp_manifest;
  double dmp_ratio = -1.0;
  auto* dmp = app.add_subcommand("mae-dump", "Input / reconstruction / overlay PGMs from an MAE checkpoint");
  dmp_c.attach(dmp);
  dmp->add_option("--checkpoint", dmp_ckpt)->required()->check(CLI::ExistingFile);
  dmp->add_option("--manifest", dmp_manifest)->required()->check(CLI::ExistingFile);
  dmp->add_option("--ratio", dmp_ratio, "Mask ratio (default: the checkpoint's train.mask_ratio)");

  Common syn_c;
  std::string syn_kind = "mixtures";
  std::size_t syn_count = 8;
  double syn_seconds = 4.0;
  auto* syn = app.add_subcommand("synth", "Write a synthetic corpus (mixtures | tones) with a manifest");
  syn_c.attach(syn);
  syn->add_option("--kind", syn_kind)->check(CLI::IsMember({"mixtures", "tones"}));
  syn->add_option("--count", syn_count, "Clips (mixtures) or clips per class (tones)");
  syn->add_option("--seconds", syn_seconds);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kConfigExit;
  }

  try {
    if (pre->parsed() || mae->parsed()) {
      const bool is_mae = mae->parsed();
      const Common& c = is_mae ? mae_c : pre_c;
      const myna::RunConfig cfg =
          is_mae ? c.resolve({"train.mode=mae"}) : c.resolve();
      if (!is_mae && cfg.train.mode == myna::TrainMode::kMae) {
        throw myna::ConfigError("train.mode=mae belongs to mae-pretrain");
      }
      cli::PretrainOptions opts;
      opts.manifest = is_mae ? mae_manifest : pre_manifest;
      opts.out = c.out;
      const std::string& log = is_mae ? mae_log : pre_log;
      const std::string& resume = is_mae ? mae_resume : pre_resume;
      if (!log.empty()) opts.log = log;
      if (!resume.empty()) opts.resume = resume;
      cli::cmd_pretrain(cfg, opts, std::cout);
    } else if (emb->parsed()) {
      emb_c.resolve();
      cli::cmd_embed(emb_ckpt, emb_manifest, emb_c.out, std::cout);
    } else if (prb->parsed()) {
      cli::cmd_probe(prb_c.resolve(), prb_features, prb_c.out, std::cout);
    } else if (swm->parsed()) {
      std::vector<std::string> extra;
      if (!swm_ratios.empty()) extra.push_back("sweep.ratios=" + swm_ratios);
      cli::cmd_sweep_mask(swm_c.resolve(extra), swm_c.out, std::cout);
    } else if (swb->parsed()) {
      std::vector<std::string> extra;
      if (!swb_sizes.empty()) extra.push_back("sweep.sizes=" + swb_sizes);
      cli::cmd_sweep_batch(swb_c.resolve(extra), swb_c.out, std::cout);
    } else if (dmp->parsed()) {
      const myna::RunConfig cfg = dmp_c.resolve();
      const auto ckpt = myna::train::load_checkpoint(dmp_ckpt);
      const double ratio = dmp_ratio >= 0.0 ? dmp_ratio : ckpt.config.train.mask_ratio;
      cli::cmd_mae_dump(dmp_ckpt, dmp_manifest, dmp_c.out, ratio, cfg.train.seed, std::cout);
    } else if (syn->parsed()) {
      const myna::RunConfig cfg = syn_c.resolve();
      const auto manifest = cli::cmd_synth(syn_kind, syn_count, syn_seconds, cfg.train.seed, syn_c.out);
      std::cout << "wrote " << manifest.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "myna: " << e.what() << '\n';
    return cli::exit_code_for(e);
  }
  return cli::kOk;
}
