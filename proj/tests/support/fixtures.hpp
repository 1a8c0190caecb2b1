// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "arcl/arc.hpp"
#include "arcl/rng.hpp"
#include "arcl/trainer.hpp"
#include "arcl/vit.hpp"

namespace fixtures {

/// D=16, L=3, two heads, 8x8x3 images in 4x4 patches, 4 classes.
inline arcl::BackboneConfig toy_backbone() { return arcl::BackboneConfig{}; }

inline constexpr arcl::Site kAllSites[] = {arcl::Site::before_mha, arcl::Site::after_mha,
                                           arcl::Site::before_ffn, arcl::Site::after_ffn};
inline constexpr arcl::Sharing kAllSharings[] = {
    arcl::Sharing::intra_inter, arcl::Sharing::intra_inter_star, arcl::Sharing::non_intra_inter,
    arcl::Sharing::non_intra_non_inter};

/// Every combination in the census grid that validates against `backbone`:
/// all non-empty position subsets x sharing x form x insertion sets x
/// variant x bottleneck width.
inline std::vector<arcl::ArcConfig> config_grid(const arcl::BackboneConfig& backbone) {
  std::vector<arcl::ArcConfig> out;
  const std::vector<std::vector<int>> layer_sets = {{}, {1}, {1, 3}, {2, 3}};
  for (int mask = 1; mask < 16; ++mask) {
    std::vector<arcl::Site> sites;
    for (int i = 0; i < 4; ++i)
      if (mask & (1 << i)) sites.push_back(kAllSites[i]);
    for (auto sharing : kAllSharings)
      for (auto form : {arcl::Form::sequential, arcl::Form::parallel})
        for (const auto& layers : layer_sets)
          for (auto variant : {arcl::Variant::bottleneck, arcl::Variant::full_rank})
            for (int width : {1, 4, 16}) {
              if (variant == arcl::Variant::full_rank && width != 4) continue;
              arcl::ArcConfig c;
              c.positions = sites;
              c.sharing = sharing;
              c.form = form;
              c.insertion_layers = layers;
              c.variant = variant;
              c.bottleneck = width;
              try {
                c.validate(backbone);
              } catch (const arcl::ConfigError&) {
                continue;
              }
              out.push_back(c);
            }
  }
  return out;
}

/// Overwrites every bank tensor with N(0, scale^2) so that no adapter is
/// the identity.
inline void randomize(arcl::AdapterBank& bank, arcl::Rng& rng, double scale = 0.3) {
  for (auto& [name, m] : bank.tensors())
    for (double& x : m.data()) x = rng.normal(0.0, scale);
}

/// The sigma = 0 separable 4-class task on the toy ViT, with the
/// frozen random backbone, default-layout ARC (D' = 8) and 500 steps.
struct TrainingFixture {
  arcl::BackboneWeights weights;
  arcl::Dataset data;
  arcl::ArcConfig arc;
  arcl::TrainConfig train;
  std::uint64_t seed = 0;

  arcl::AdapterBank fresh_bank() const {
    arcl::Rng rng = arcl::Rng(seed).fork(9);
    return arcl::init_bank(arc, weights.config, rng);
  }
};

inline constexpr std::uint64_t kTrainingSeed = 1;
inline constexpr double kComparisonLr = 5e-4;
inline constexpr double kConvergenceLr = 1e-2;

inline TrainingFixture training_fixture(std::uint64_t seed = kTrainingSeed,
                                        double lr = kComparisonLr) {
  TrainingFixture f;
  f.seed = seed;
  arcl::Rng backbone_rng(seed);
  f.weights = arcl::init_backbone(toy_backbone(), backbone_rng);
  arcl::TaskSpec task;
  task.noise = 0.0;
  task.train_samples = 32;
  task.eval_samples = 0;
  arcl::Rng task_rng = arcl::Rng(seed).fork(7);
  f.data = arcl::make_task(task, f.weights.config, task_rng);
  f.arc.bottleneck = 8;
  f.train.lr = lr;
  f.train.batch_size = 8;
  f.train.epochs = 125;  // 4 steps per epoch
  f.train.warmup_epochs = 10;
  f.train.seed = seed;
  return f;
}

}  // namespace fixtures
