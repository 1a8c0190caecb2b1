// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>

#include "arcl/arc.hpp"
#include "arcl/rng.hpp"
#include "arcl/vit.hpp"

namespace arcl {

/// Fused adapters must reproduce the adapted model to this absolute logit
/// deviation. Reassociated f64 products rule out bitwise equality.
inline constexpr double kFusionTolerance = 1e-10;

struct FusionProvenance {
  std::string source_checkpoint;
  std::string config_digest;
  std::optional<double> max_verified_deviation;
};

/// Plain backbone weights with the adapters folded in; evaluate with
/// vit::forward and no adapter bank.
struct FusedWeights {
  BackboneWeights weights;
  FusionProvenance provenance;
};

/// Folds every adapter of an eval-mode bank into the neighbouring frozen
/// linear maps. With A the adapter's linear part and b its bias:
///
///   before_mha / before_ffn, sequential:  W' = (A + I) W,  b_W' = b_W + b W
///   before_mha / before_ffn, parallel:    W' = W + A W,    b_W' = b_W + b W
///   after_mha  / after_ffn:               W' = W (A + I),  b_W' = b_W (A + I) + b
///
/// where W ranges over W_q, W_k, W_v (before_mha), W_1 (before_ffn), W_o
/// (after_mha) or W_2 (after_ffn). This is exact because a before_* adapter
/// sits strictly between the LayerNorm output and the block's first linear
/// maps, and an after_* adapter strictly after the block's last linear map.
///
/// Throws ContractError for a train-mode bank and ConfigError when the bank
/// and the weights disagree on the backbone config.
FusedWeights fuse(const BackboneWeights& weights, const AdapterBank& bank);

/// Max absolute logit deviation between the adapted model (eval mode) and
/// the fused plain model over `trials` random images drawn from `rng`.
double verify_fusion(const BackboneWeights& weights, const AdapterBank& bank,
                     const FusedWeights& fused, int trials, Rng& rng);

}  // namespace arcl
