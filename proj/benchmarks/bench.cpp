// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "arcl/analysis.hpp"
#include "arcl/arc.hpp"
#include "arcl/kernel.hpp"
#include "arcl/reparam.hpp"
#include "arcl/trainer.hpp"
#include "arcl/vit.hpp"

namespace {

using namespace arcl;

Matrix gaussian(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = gaussian(n, n, rng), b = gaussian(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(kernel::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

void BM_Svd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Matrix a = gaussian(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(kernel::svd(a));
}
BENCHMARK(BM_Svd)->RangeMultiplier(2)->Range(8, 128);

struct Model {
  BackboneConfig config;
  BackboneWeights weights;
  AdapterBank bank;
  std::vector<Image> images;

  static ArcConfig arc() {
    ArcConfig c;
    c.bottleneck = 8;
    return c;
  }

  explicit Model(int dim)
      : config([dim] {
          BackboneConfig c;
          c.image_size = 16;
          c.embed_dim = dim;
          c.heads = 4;
          c.layers = 4;
          return c;
        }()),
        bank(arc(), config) {
    Rng rng(3);
    weights = init_backbone(config, rng);
    bank = init_bank(arc(), config, rng);
    for (auto& [name, m] : bank.tensors())
      for (double& x : m.data()) x = rng.normal(0.0, 0.1);
    for (int i = 0; i < 8; ++i) images.push_back(random_image(config, rng));
  }
};

// plain, adapted and fused forward on a batch of 8
void BM_Forward(benchmark::State& state) {
  const Model m(static_cast<int>(state.range(0)));
  const FusedWeights fused = fuse(m.weights, m.bank);
  for (auto _ : state) {
    switch (state.range(1)) {
      case 0: benchmark::DoNotOptimize(vit::forward_batch(m.images, m.weights)); break;
      case 1: benchmark::DoNotOptimize(vit::forward_batch(m.images, m.weights, &m.bank)); break;
      default: benchmark::DoNotOptimize(vit::forward_batch(m.images, fused.weights)); break;
    }
  }
  state.SetLabel(state.range(1) == 0 ? "plain" : state.range(1) == 1 ? "adapted" : "fused");
}
BENCHMARK(BM_Forward)->ArgsProduct({{32, 64}, {0, 1, 2}})->Unit(benchmark::kMillisecond);

void BM_Fuse(benchmark::State& state) {
  const Model m(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fuse(m.weights, m.bank));
}
BENCHMARK(BM_Fuse)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

// one epoch of 8 samples at batch 8, i.e. one AdamW step
void BM_TrainStep(benchmark::State& state) {
  Model m(static_cast<int>(state.range(0)));
  TaskSpec task;
  task.classes = m.config.classes;
  task.train_samples = 8;
  task.eval_samples = 0;
  Rng rng(4);
  const Dataset data = make_task(task, m.config, rng);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.warmup_epochs = 0;
  cfg.batch_size = 8;
  for (auto _ : state) {
    AdapterBank bank = m.bank;
    BackboneWeights w = m.weights;
    benchmark::DoNotOptimize(train(w, &bank, data, cfg));
  }
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_RankSweep(benchmark::State& state) {
  const Model m(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(analysis::rank_sweep(m.bank));
}
BENCHMARK(BM_RankSweep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
