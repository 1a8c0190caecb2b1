// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arcl/arc.hpp"

/// Closed-form trainable-parameter counts for ARC and the usual
/// parameter-efficient baselines. Task heads are never included; see
/// head_count().
namespace arcl::accounting {

using Count = std::int64_t;

enum class Method { adapter, vpt_shallow, vpt_deep, lora, ssf, arc, arc_att };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

/// A method plus the knobs it uses: bottleneck D' (adapter, lora, arc,
/// arc_att), prompt count m (vpt_*), adapted attention matrices w (lora),
/// modulated operations o (ssf).
struct MethodSpec {
  Method method = Method::arc;
  std::optional<Count> bottleneck;
  std::optional<Count> prompts;
  std::optional<Count> attn_matrices;
  std::optional<Count> operations;

  /// Throws ConfigError if a required knob is missing or non-positive, or
  /// if a knob the method does not use is set.
  void validate() const;
};

/// Extra parameters trained during fine-tuning:
///   adapter 2·D·D'·L, vpt_shallow m·D, vpt_deep m·D·L, lora 2·w·D·D'·L,
///   ssf 2·o·D·L, arc 2·(D·D' + (D'+D)·L), arc_att D·D' + (D'+D)·L.
Count count_finetune(const MethodSpec& spec, Count dim, Count layers);

/// Extra parameters left at inference: adapter and vpt keep theirs;
/// lora, ssf and arc fold into the backbone and leave 0.
Count count_inference(const MethodSpec& spec, Count dim, Count layers);

/// D·K + K.
Count head_count(Count dim, Count classes);

/// Count for an arbitrary ARC configuration, derived from its structure:
/// projections cost D·D' per group (twice without intra sharing), once
/// when shared across layers or once per inserted layer otherwise; every
/// (layer, site) adds D' coefficients and D biases. The full-rank variant
/// costs D² per (layer, site).
Count count_arc_config(const ArcConfig& config, const BackboneConfig& backbone);

struct ScalingRow {
  std::string label;
  Count dim = 0;
  Count layers = 0;
  Count finetune = 0;
  Count inference = 0;
};

struct BackboneShape {
  std::string name;
  Count dim = 0;
  Count layers = 0;
};

/// ViT-B/16, ViT-L/16 and ViT-H/14 widths and depths.
std::vector<BackboneShape> standard_backbones();

/// One row per backbone shape.
std::vector<ScalingRow> scaling_table(const MethodSpec& spec,
                                      const std::vector<BackboneShape>& shapes);
/// One row per layer count in [first, last] at fixed width.
std::vector<ScalingRow> scaling_table(const MethodSpec& spec, Count dim, Count first,
                                      Count last);

}  // namespace arcl::accounting
