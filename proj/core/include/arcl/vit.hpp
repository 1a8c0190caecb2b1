// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "arcl/autodiff.hpp"
#include "arcl/matrix.hpp"
#include "arcl/rng.hpp"

namespace arcl {

class AdapterBank;

enum class Mode { train, eval };

/// Shape of a plain pre-norm Vision Transformer.
struct BackboneConfig {
  int image_size = 8;  // H == W
  int patch_size = 4;
  int channels = 3;
  int embed_dim = 16;
  int layers = 3;
  int heads = 2;
  int mlp_ratio = 4;
  int classes = 4;
  double ln_eps = 1e-6;

  /// Throws ConfigError unless all counts are positive (layers may be 0),
  /// image_size % patch_size == 0 and embed_dim % heads == 0.
  void validate() const;

  int num_patches() const { return (image_size / patch_size) * (image_size / patch_size); }
  int tokens() const { return num_patches() + 1; }
  int head_dim() const { return embed_dim / heads; }
  int patch_dim() const { return patch_size * patch_size * channels; }
  int hidden_dim() const { return mlp_ratio * embed_dim; }

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

/// H x W x C image, pixels row-major over (row, col, channel).
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> pixels;

  double at(std::size_t r, std::size_t c, std::size_t ch) const {
    return pixels[(r * width + c) * channels + ch];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

Image random_image(const BackboneConfig& config, Rng& rng);

struct LayerWeights {
  Matrix ln1_g, ln1_b;
  Matrix wq, bq, wk, bk, wv, bv;  // D x D, 1 x D; heads are column blocks
  Matrix wo, bo;
  Matrix ln2_g, ln2_b;
  Matrix w1, b1;  // D x hidden, 1 x hidden
  Matrix w2, b2;  // hidden x D, 1 x D
};

/// Backbone parameters including the classification head. Every bias and
/// LayerNorm vector is a 1 x n row.
struct BackboneWeights {
  BackboneConfig config;
  Matrix patch_w, patch_b;  // (P*P*C) x D, 1 x D
  Matrix cls;               // 1 x D
  Matrix pos;               // (N+1) x D
  std::vector<LayerWeights> layers;
  Matrix ln_g, ln_b;
  Matrix head_w, head_b;  // D x K, 1 x K

  /// Correctly shaped weights: zero matrices, LayerNorm gains of one.
  static BackboneWeights zeros(const BackboneConfig& config);

  /// Stable tensor names in serialization order, e.g. "layers.0.wq".
  std::vector<std::pair<std::string, Matrix*>> named_tensors();
  std::vector<std::pair<std::string, const Matrix*>> named_tensors() const;
  /// The head tensors, which stay trainable while the rest is frozen.
  static bool is_head(const std::string& name) { return name.rfind("head.", 0) == 0; }

  /// Throws DimensionError naming the first tensor whose shape differs from
  /// what `config` implies.
  void validate_shapes() const;
};

/// Random backbone: matrices ~ N(0, 1/fan_in), biases ~ N(0, 0.02^2),
/// class token and position embedding ~ N(0, 0.02^2), LayerNorm (1, 0).
BackboneWeights init_backbone(const BackboneConfig& config, Rng& rng);

/// SHA-256 (hex) over the names and bytes of every non-head tensor.
std::string frozen_checksum(const BackboneWeights& weights);

namespace vit {

/// N x (P*P*C) patch matrix. Patches are taken in row-major patch order and
/// each is flattened row-major over (pixel row, pixel col, channel).
Matrix extract_patches(const Image& image, const BackboneConfig& config);

/// [cls; patches * W + b] + pos, shape (N+1) x D.
Matrix patch_embed(const Image& image, const BackboneWeights& weights);

/// Multi-head self-attention block output (after W_o and its bias).
Matrix mha(const Matrix& x_norm, const LayerWeights& layer, int heads);

/// GELU(x W1 + b1) W2 + b2.
Matrix ffn(const Matrix& x_norm, const LayerWeights& layer);

/// Class logits, 1 x K. `adapters` hooks in per its hook table; `rng` feeds
/// adapter dropout and is required only in train mode with a positive rate.
Matrix forward(const Image& image, const BackboneWeights& weights,
               const AdapterBank* adapters = nullptr, Mode mode = Mode::eval,
               Rng* rng = nullptr);

/// One row of logits per image.
Matrix forward_batch(std::span<const Image> images, const BackboneWeights& weights,
                     const AdapterBank* adapters = nullptr, Mode mode = Mode::eval,
                     Rng* rng = nullptr);

/// The same computation recorded on `tape`. Weight tensors resolve through
/// Tape::leaf, so anything registered with Tape::parameter beforehand is
/// differentiated and everything else is a frozen constant.
autodiff::Var forward_batch(autodiff::Tape& tape, std::span<const Image> images,
                            const BackboneWeights& weights,
                            const AdapterBank* adapters = nullptr, Mode mode = Mode::eval,
                            Rng* rng = nullptr);

}  // namespace vit
}  // namespace arcl
