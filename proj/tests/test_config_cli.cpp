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

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "myna/commands.hpp"
#include "myna/error.hpp"
#include "myna/synthetic.hpp"
#include "myna/tensor_io.hpp"
#include "support.hpp"

namespace myna {
namespace {

// Small model so the command-level tests run in seconds.
const std::string kSmall =
    " --set model.dim=32 --set model.depth=1 --set model.heads=2 --set model.mlp_ratio=2 --set model.proj_dim=16"
    " --set model.decoder_dim=16 --set model.decoder_depth=1 --set model.decoder_heads=2 --set train.batch_size=4";

int run_cli(const std::string& args, const testing::TempDir& dir) {
  const std::string cmd = std::string(MYNA_CLI_PATH) + " " + args + " >" + (dir / "stdout.txt").string() + " 2>" +
                          (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count_lines(const std::filesystem::path& p) {
  std::istringstream s(slurp(p));
  std::size_t n = 0;
  for (std::string line; std::getline(s, line);) n += !line.empty();
  return n;
}

TEST(Config, ParsesSectionsAndOverrides) {
  const auto cfg = RunConfig::parse("# comment\n[train]\nmode = hybrid\nmask_ratio = 0.75\n\n[model]\ndim = 64\n");
  EXPECT_EQ(cfg.train.mode, TrainMode::kHybrid);
  EXPECT_EQ(cfg.train.mask_ratio, 0.75);
  EXPECT_EQ(cfg.model.dim, 64u);
  EXPECT_EQ(cfg.model_config().patch_cfgs.size(), 2u);
  RunConfig c2 = cfg;
  c2.set("train.tau=0.2");
  EXPECT_EQ(c2.train.objective.tau, 0.2);
}

TEST(Config, CanonicalTextRoundTrips) {
  RunConfig cfg;
  cfg.set("train.lr=0.00123456789");
  cfg.set("probe.lr=1e-4,1e-3");
  cfg.set("sweep.ratios=0.1,0.5,0.9");
  const std::string text = cfg.canonical();
  EXPECT_EQ(RunConfig::parse(text).canonical(), text);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(RunConfig::parse("[train]\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[nowhere]\nx = 1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("mode = square\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[train]\nsteps = many\n"), ConfigError);
  RunConfig cfg;
  cfg.set("train.mask_ratio=1.0");
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = RunConfig{};
  cfg.set("train.batch_size=1");
  EXPECT_THROW(cfg.validate(), ParameterError);
  EXPECT_THROW(cfg.set("train.mode=spiral"), ConfigError);
}

TEST(Config, ExitCodesByErrorType) {
  EXPECT_EQ(cli::exit_code_for(ConfigError("x")), cli::kConfigExit);
  EXPECT_EQ(cli::exit_code_for(FormatError("x")), cli::kDataExit);
  EXPECT_EQ(cli::exit_code_for(ValidationError("x")), cli::kValidationExit);
  EXPECT_EQ(cli::exit_code_for(NumericError("x")), cli::kNumericExit);
  EXPECT_EQ(cli::exit_code_for(std::runtime_error("x")), cli::kFailure);
}

TEST(Cli, UsageAndConfigErrors) {
  testing::TempDir dir;
  EXPECT_EQ(run_cli("--help", dir), 0);
  EXPECT_EQ(run_cli("", dir), cli::kConfigExit);
  EXPECT_EQ(run_cli("frobnicate", dir), cli::kConfigExit);
  EXPECT_EQ(run_cli("synth --out " + (dir / "c").string() + " --set train.nope=1", dir), cli::kConfigExit);
  EXPECT_FALSE(std::filesystem::exists(dir / "c")) << "nothing written before validation";
  std::ofstream(dir / "empty.txt") << "# nothing here\n";
  EXPECT_EQ(run_cli("pretrain --manifest " + (dir / "empty.txt").string() + " --out " + (dir / "x.ckpt").string() + kSmall,
                    dir),
            cli::kDataExit);
  std::ofstream(dir / "m.txt") << "missing.wav\n";
  EXPECT_EQ(run_cli("pretrain --manifest " + (dir / "m.txt").string() + " --out " + (dir / "x.ckpt").string() + kSmall,
                    dir),
            cli::kDataExit);
}

TEST(Cli, PretrainEmbedProbeEndToEnd) {
  testing::TempDir dir;
  ASSERT_EQ(run_cli("synth --kind mixtures --count 4 --seconds 3.5 --out " + (dir / "mix").string(), dir), 0);
  ASSERT_EQ(run_cli("synth --kind tones --count 4 --seconds 3 --out " + (dir / "tones").string(), dir), 0);
  const auto ckpt = (dir / "model.ckpt").string();
  const std::string pre = "pretrain --manifest " + (dir / "mix" / "manifest.txt").string() + " --out " + ckpt +
                          kSmall + " --set train.mode=hybrid --set train.steps=3";
  ASSERT_EQ(run_cli(pre, dir), 0) << slurp(dir / "stderr.txt");
  EXPECT_EQ(count_lines(ckpt + ".log.csv"), 4u);  // header + 3 steps
  EXPECT_NE(slurp(dir / "stdout.txt").find("after 3 steps"), std::string::npos);

  // Resume to 5 steps; the log grows to 5 rows.
  ASSERT_EQ(run_cli(pre + " --set train.steps=5 --resume " + ckpt, dir), 0) << slurp(dir / "stderr.txt");
  EXPECT_EQ(count_lines(ckpt + ".log.csv"), 6u);
  EXPECT_EQ(train::load_checkpoint(ckpt).step, 5u);
  // On resume the checkpoint's settings win; only the step budget is taken.
  const double lr = train::load_checkpoint(ckpt).config.train.lr;
  ASSERT_EQ(run_cli(pre + " --set train.lr=0.1 --set train.steps=6 --resume " + ckpt, dir), 0);
  EXPECT_NE(slurp(dir / "stdout.txt").find("note: resuming"), std::string::npos);
  EXPECT_EQ(train::load_checkpoint(ckpt).config.train.lr, lr);
  EXPECT_EQ(train::load_checkpoint(ckpt).step, 6u);

  const auto feats = (dir / "f.tensors").string();
  const std::string embed =
      "embed --checkpoint " + ckpt + " --manifest " + (dir / "tones" / "manifest.txt").string() + " --out " + feats;
  ASSERT_EQ(run_cli(embed, dir), 0) << slurp(dir / "stderr.txt");
  const auto table = io::read_table(feats);
  const auto& f = table.at("features");
  EXPECT_EQ(f.shape, (std::vector<std::uint64_t>{16, 64}));  // concat of two 32-d branches
  EXPECT_EQ(table.at("features.square").shape[1], 32u);
  const std::string first = slurp(feats);
  ASSERT_EQ(run_cli(embed, dir), 0);
  EXPECT_EQ(slurp(feats), first) << "embedding export is deterministic";

  // The same clip listed twice embeds to identical rows.
  const auto first_clip = audio::read_manifest(dir / "tones" / "manifest.txt").front().path.string();
  std::ofstream(dir / "twice.txt") << first_clip << "\n" << first_clip << "\n";
  ASSERT_EQ(run_cli("embed --checkpoint " + ckpt + " --manifest " + (dir / "twice.txt").string() + " --out " +
                        (dir / "twice.tensors").string(),
                    dir),
            0)
      << slurp(dir / "stderr.txt");
  const auto twice = io::read_table(dir / "twice.tensors");
  const auto& rows = twice.at("features").data;
  ASSERT_EQ(rows.size(), 128u);
  EXPECT_TRUE(std::equal(rows.begin(), rows.begin() + 64, rows.begin() + 64));

  const auto csv = (dir / "probe.csv").string();
  ASSERT_EQ(run_cli("probe --features " + feats + " --out " + csv + " --set probe.model=linear --set probe.batch=64"
                    " --set probe.lr=1e-3 --set probe.dropout=0.25 --set probe.l2=0,1e-4",
                    dir),
            0)
      << slurp(dir / "stderr.txt");
  EXPECT_EQ(count_lines(csv), 1u + 2u * 2u);  // both standardize settings x two l2 values
  EXPECT_NE(slurp(dir / "stdout.txt").find("accuracy"), std::string::npos);
}

TEST(Cli, MaeDumpOverlayKeepsVisiblePixels) {
  testing::TempDir dir;
  ASSERT_EQ(run_cli("synth --kind mixtures --count 3 --seconds 3.2 --out " + (dir / "mix").string(), dir), 0);
  const auto manifest = (dir / "mix" / "manifest.txt").string();
  const auto ckpt = (dir / "mae.ckpt").string();
  ASSERT_EQ(run_cli("mae-pretrain --manifest " + manifest + " --out " + ckpt + kSmall + " --set train.steps=2", dir), 0)
      << slurp(dir / "stderr.txt");
  EXPECT_EQ(run_cli("pretrain --manifest " + manifest + " --out " + ckpt + kSmall + " --set train.mode=mae", dir),
            cli::kConfigExit);
  ASSERT_EQ(run_cli("mae-dump --checkpoint " + ckpt + " --manifest " + manifest + " --out " + (dir / "d").string(), dir),
            0)
      << slurp(dir / "stderr.txt");
  const std::string pgm = slurp(dir / "d" / "clip_000_overlay.pgm");
  EXPECT_EQ(pgm.rfind("P5\n96 128\n255\n", 0), 0u);
  EXPECT_EQ(pgm.size(), std::string("P5\n96 128\n255\n").size() + 96u * 128u);

  const auto t = io::read_table(dir / "d" / "clip_000.tensors");
  const auto& in = t.at("input").data;
  const auto& ov = t.at("overlay").data;
  const auto& kept = t.at("kept").data;
  ASSERT_FALSE(kept.empty());
  for (float k : kept) {
    const auto p = static_cast<std::size_t>(k);
    const std::size_t r0 = (p / 6) * 16, c0 = (p % 6) * 16;  // square patches, 8 x 6 grid
    for (std::size_t r = r0; r < r0 + 16; ++r) {
      for (std::size_t c = c0; c < c0 + 16; ++c) ASSERT_EQ(ov[r * 96 + c], in[r * 96 + c]);
    }
  }
  // A contrastive checkpoint cannot be dumped.
  const auto con = (dir / "con.ckpt").string();
  ASSERT_EQ(run_cli("pretrain --manifest " + manifest + " --out " + con + kSmall + " --set train.steps=1", dir), 0);
  EXPECT_EQ(run_cli("mae-dump --checkpoint " + con + " --manifest " + manifest + " --out " + (dir / "e").string(), dir),
            cli::kConfigExit);
}

TEST(Cli, SweepsWriteOneRowPerPoint) {
  testing::TempDir dir;
  const std::string fast = kSmall + " --set sweep.steps=2 --set sweep.corpus_clips=4 --set sweep.probe_clips_per_class=4";
  ASSERT_EQ(run_cli("sweep-mask --ratios 0.1,0.9 --out " + (dir / "m.csv").string() + fast, dir), 0)
      << slurp(dir / "stderr.txt");
  EXPECT_EQ(count_lines(dir / "m.csv"), 3u);
  EXPECT_EQ(slurp(dir / "m.csv").rfind("ratio,", 0), 0u);
  ASSERT_EQ(run_cli("sweep-batch --sizes 2,4,8 --out " + (dir / "b.csv").string() + fast, dir), 0)
      << slurp(dir / "stderr.txt");
  EXPECT_EQ(count_lines(dir / "b.csv"), 4u);
  EXPECT_EQ(slurp(dir / "b.csv").rfind("batch,", 0), 0u);
}

}  // namespace
}  // namespace myna
