// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "arcl/arc.hpp"
#include "arcl/digest.hpp"
#include "arcl/matrix.hpp"
#include "arcl/reparam.hpp"
#include "arcl/vit.hpp"

namespace arcl {

/// Binary layout, all integers little-endian:
///
///   "ARCL"  u32 version  u8 fused  32-byte config digest
///   then, repeated to end of file:
///   u32 name_len  name (UTF-8)  u32 ndim  u32 dims[ndim]  f64 payload[prod(dims)]
///
/// Matrices are written with ndim = 2 (rows, cols); ndim = 1 reads as 1 x n.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  bool fused = false;
  Digest config_digest{};
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix* find(const std::string& name) const;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode(const Checkpoint& ckpt);
/// Throws FormatError carrying the byte offset of the first problem: bad
/// magic, unknown version, truncation, duplicate names, bad ndim. Nothing is
/// returned unless the whole buffer parses.
Checkpoint decode(std::span<const std::uint8_t> bytes);

/// Writes through a temporary file renamed into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Backbone tensors (named as BackboneWeights::named_tensors) followed by
/// the bank's tensors, if any.
Checkpoint make_checkpoint(const BackboneWeights& weights, const AdapterBank* bank,
                           const Digest& config_digest);
Checkpoint make_fused_checkpoint(const FusedWeights& fused, const Digest& config_digest);

/// A checkpoint rebuilt against its configs.
struct LoadedModel {
  BackboneWeights weights;
  std::optional<AdapterBank> bank;  // empty for fused checkpoints
  bool fused = false;
  Digest config_digest{};

  /// Fused checkpoints run the plain backbone; unfused ones run with the
  /// adapter bank in eval mode.
  Matrix forward(const Image& image) const;
  Matrix forward_batch(std::span<const Image> images) const;
};

/// Rebuilds weights (and, unless fused, the adapter bank) from `ckpt`.
/// Throws ConfigError when the digest differs from `expected_digest` (if
/// given), when a tensor the configs imply is missing or has the wrong
/// shape, or when the checkpoint holds a tensor the configs do not know.
LoadedModel restore(const Checkpoint& ckpt, const BackboneConfig& backbone,
                    const ArcConfig& arc, const std::optional<Digest>& expected_digest = {});

}  // namespace arcl
