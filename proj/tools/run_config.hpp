// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "arcl/arc.hpp"
#include "arcl/digest.hpp"
#include "arcl/trainer.hpp"
#include "arcl/vit.hpp"

namespace arcl::cli {

/// One experiment. JSON layout:
///
///   { "backbone": {...}, "arc": {...}, "train": {...}, "task": {...},
///     "io": {"out_dir": "...", "seed": N} }
///
/// Every section and key is optional; missing ones take the defaults below.
/// The task's class count is backbone.classes. The seed drives the random
/// frozen backbone, the task, the adapter init and the training streams.
struct RunConfig {
  BackboneConfig backbone = desk_backbone();
  ArcConfig arc;
  TrainConfig train;
  TaskSpec task;
  std::string out_dir = "arcl_out";
  std::uint64_t seed = 0;

  static BackboneConfig desk_backbone();
  /// Throws ConfigError on any invalid field or cross-section mismatch.
  void validate() const;
};

/// Strict parse: unknown sections or keys and wrongly typed values throw
/// ConfigError naming the dotted key (e.g. "arc.bottlenek").
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Effective config with every default materialized, keys sorted.
std::string to_json(const RunConfig& config, int indent = 2);
/// SHA-256 of the compact canonical JSON, io.out_dir left out.
Digest config_digest(const RunConfig& config);

/// Seeds for the independent random streams of a run.
struct RunSeeds {
  std::uint64_t backbone;
  std::uint64_t task;
  std::uint64_t adapters;
  std::uint64_t train;
  std::uint64_t probe;
};
RunSeeds derive_seeds(std::uint64_t seed);

}  // namespace arcl::cli
