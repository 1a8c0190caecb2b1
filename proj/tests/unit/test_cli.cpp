// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "arcl/checkpoint.hpp"
#include "commands.hpp"
#include "run_config.hpp"

namespace {

using namespace arcl;
namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "arcl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("arcl_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& leaf, const std::string& text) const {
    const fs::path p = dir_ / leaf;
    std::ofstream(p) << text;
    return p;
  }

  static std::string read(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  fs::path dir_;
};

constexpr const char* kSmallConfig = R"({
  "backbone": {"image_size": 8, "patch_size": 4, "embed_dim": 16, "layers": 2, "heads": 2},
  "arc": {"bottleneck": 4},
  "train": {"epochs": 3, "warmup_epochs": 1, "batch_size": 4},
  "task": {"train_samples": 8, "eval_samples": 4},
  "io": {"seed": 5}
})";

TEST_F(Cli, CountPrintsTheArcTotal) {
  const Outcome o = run_cli({"count", "--method", "arc", "--D", "768", "--L", "12", "--Dprime", "50"});
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("96432"), std::string::npos) << o.out;
  const std::string header = o.out.substr(0, o.out.find('\n'));
  EXPECT_NE(header.find("finetune"), std::string::npos);

  const fs::path csv = dir_ / "counts.csv";
  EXPECT_EQ(run_cli({"count", "--method", "arc", "--D", "768", "--L", "3", "--Dprime", "50",
                     "--sweep", "layers", "--csv", csv.string()})
                .code,
            0);
  EXPECT_EQ(read(csv),
            "method,label,D,L,finetune,inference\n"
            "arc,L=1,768,1,78436,0\n"
            "arc,L=2,768,2,80072,0\n"
            "arc,L=3,768,3,81708,0\n");
}

TEST_F(Cli, CountRejectsBadKnobs) {
  EXPECT_EQ(run_cli({"count", "--method", "arc", "--D", "768", "--L", "12"}).code, 2);
  EXPECT_EQ(run_cli({"count", "--method", "vpt_deep", "--D", "768", "--L", "12", "--m", "10",
                     "--Dprime", "5"})
                .code,
            2);
  EXPECT_EQ(run_cli({"count", "--method", "nope", "--D", "1", "--L", "1"}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
}

TEST_F(Cli, UnknownConfigKeyIsNamed) {
  const fs::path cfg = write("bad.json", R"({"arc": {"bottlenek": 8}})");
  const Outcome o = run_cli({"train", "--config", cfg.string(), "--out", (dir_ / "run").string()});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("arc.bottlenek"), std::string::npos) << o.err;
  EXPECT_FALSE(fs::exists(dir_ / "run" / "checkpoint.arcl"));
}

TEST_F(Cli, EffectiveConfigRoundTrips) {
  const cli::RunConfig cfg = cli::parse_run_config(kSmallConfig);
  const std::string echoed = cli::to_json(cfg);
  const cli::RunConfig again = cli::parse_run_config(echoed);
  EXPECT_EQ(cli::to_json(again), echoed);
  EXPECT_EQ(cli::config_digest(again), cli::config_digest(cfg));
  // defaults are materialized
  EXPECT_NE(echoed.find("\"dropout_rate\""), std::string::npos);
  EXPECT_NE(echoed.find("\"weight_decay\""), std::string::npos);
  EXPECT_THROW(cli::parse_run_config(R"({"train": {"lr": "fast"}})"), ConfigError);
  EXPECT_THROW(cli::parse_run_config(R"({"train": {"optimizer": "sgd"}})"), ConfigError);
  EXPECT_THROW(cli::parse_run_config(R"({"extra": {}})"), ConfigError);
}

TEST_F(Cli, TrainFuseVerifySpectrum) {
  const fs::path cfg = write("small.json", kSmallConfig);
  const fs::path run = dir_ / "run";
  Outcome o = run_cli({"train", "--config", cfg.string(), "--out", run.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("steps           6"), std::string::npos) << o.out;
  EXPECT_TRUE(fs::exists(run / "checkpoint.arcl"));
  EXPECT_TRUE(fs::exists(run / "effective_config.json"));
  const std::string loss = read(run / "loss.csv");
  EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), 7);

  const fs::path fused = dir_ / "fused" / "fused.arcl";
  o = run_cli({"fuse", "--checkpoint", (run / "checkpoint.arcl").string(), "--out", fused.string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(load_checkpoint(fused).fused);
  EXPECT_TRUE(fs::exists(fused.parent_path() / "effective_config.json"));

  o = run_cli({"verify", "--checkpoint", (run / "checkpoint.arcl").string(), "--fused",
               fused.string(), "--trials", "4"});
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("PASS"), std::string::npos) << o.out;

  o = run_cli({"spectrum", "--checkpoint", (run / "checkpoint.arcl").string(), "--bins", "8",
               "--out", (dir_ / "spec").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(fs::exists(dir_ / "spec" / "summary.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "spec" / "spectrum_l1_MHA_before_mha.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "spec" / "spectrum_l2_FFN_before_ffn.csv"));
  EXPECT_NE(o.out.find("median_effective_rank"), std::string::npos);

  // a checkpoint paired with the wrong config is refused
  const fs::path other = write("other.json", R"({"io": {"seed": 6}})");
  o = run_cli({"spectrum", "--checkpoint", (run / "checkpoint.arcl").string(), "--out",
               (dir_ / "spec2").string(), "--config", other.string()});
  EXPECT_EQ(o.code, 2) << o.err;
}

TEST_F(Cli, TrainingIsReproducible) {
  const fs::path cfg = write("small.json", kSmallConfig);
  ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--out", (dir_ / "a").string()}).code, 0);
  ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--out", (dir_ / "b").string()}).code, 0);
  EXPECT_EQ(read(dir_ / "a" / "loss.csv"), read(dir_ / "b" / "loss.csv"));
  EXPECT_EQ(read(dir_ / "a" / "checkpoint.arcl"), read(dir_ / "b" / "checkpoint.arcl"));
  // rerunning from the echoed config reproduces the run
  ASSERT_EQ(run_cli({"train", "--config", (dir_ / "a" / "effective_config.json").string(), "--out",
                     (dir_ / "c").string()})
                .code,
            0);
  EXPECT_EQ(read(dir_ / "a" / "checkpoint.arcl"), read(dir_ / "c" / "checkpoint.arcl"));
}

TEST_F(Cli, VerifyOnIdentityAdaptersIsExact) {
  const cli::RunConfig cfg = cli::parse_run_config(kSmallConfig);
  const cli::RunSeeds seeds = cli::derive_seeds(cfg.seed);
  Rng backbone_rng(seeds.backbone), adapter_rng(seeds.adapters);
  const BackboneWeights w = init_backbone(cfg.backbone, backbone_rng);
  const AdapterBank bank = init_bank(cfg.arc, cfg.backbone, adapter_rng);
  const fs::path ckpt = dir_ / "init" / "checkpoint.arcl";
  fs::create_directories(ckpt.parent_path());
  save_checkpoint(make_checkpoint(w, &bank, cli::config_digest(cfg)), ckpt);
  write("init/effective_config.json", cli::to_json(cfg));

  const fs::path fused = dir_ / "init" / "fused.arcl";
  ASSERT_EQ(run_cli({"fuse", "--checkpoint", ckpt.string(), "--out", fused.string()}).code, 0);
  const Outcome o = run_cli({"verify", "--checkpoint", ckpt.string(), "--fused", fused.string()});
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("max_deviation   0"), std::string::npos) << o.out;
}

TEST_F(Cli, VerifyFailsOnATamperedFusedCheckpoint) {
  const fs::path cfg = write("small.json", kSmallConfig);
  const fs::path run = dir_ / "run";
  ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--out", run.string()}).code, 0);
  const fs::path fused = run / "fused.arcl";
  ASSERT_EQ(run_cli({"fuse", "--checkpoint", (run / "checkpoint.arcl").string(), "--out",
                     fused.string()})
                .code,
            0);
  Checkpoint c = load_checkpoint(fused);
  for (auto& [name, m] : c.tensors)
    if (name == "layers.0.wq") m(0, 0) += 1e-3;
  save_checkpoint(c, fused);
  const Outcome o = run_cli({"verify", "--checkpoint", (run / "checkpoint.arcl").string(),
                             "--fused", fused.string()});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.out.find("FAIL"), std::string::npos) << o.out;

  // garbage where a checkpoint should be
  write("junk.arcl", "not a checkpoint");
  EXPECT_EQ(run_cli({"fuse", "--checkpoint", (dir_ / "junk.arcl").string(), "--out",
                     (dir_ / "x.arcl").string(), "--config", cfg.string()})
                .code,
            1);
}

TEST_F(Cli, DivergenceExitsWithNumericalAbort) {
  const fs::path cfg = write("hot.json", R"({
    "backbone": {"image_size": 8, "patch_size": 4, "embed_dim": 16, "layers": 1, "heads": 2},
    "arc": {"bottleneck": 4},
    "train": {"lr": 1e300, "epochs": 4, "warmup_epochs": 0, "schedule": "constant"},
    "task": {"train_samples": 8, "eval_samples": 0}
  })");
  const Outcome o = run_cli({"train", "--config", cfg.string(), "--out", (dir_ / "hot").string()});
  EXPECT_EQ(o.code, 3) << o.out << o.err;
  EXPECT_NE(o.err.find("step"), std::string::npos) << o.err;
}

TEST_F(Cli, Gradcheck) {
  const fs::path cfg = write("g.json", R"({"arc": {"sharing": "non_intra_inter", "positions": ["before_mha", "after_ffn"]}})");
  const Outcome o = run_cli({"gradcheck", "--config", cfg.string()});
  EXPECT_EQ(o.code, 0) << o.out << o.err;
  EXPECT_NE(o.out.find("arc.mha.up"), std::string::npos) << o.out;
}

}  // namespace
