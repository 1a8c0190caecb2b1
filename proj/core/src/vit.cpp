// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "arcl/vit.hpp"

#include <cmath>

#include "arcl/arc.hpp"
#include "arcl/detail/graph.hpp"
#include "arcl/digest.hpp"
#include "arcl/errors.hpp"

namespace arcl {

void BackboneConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("backbone.") + name + " must be positive");
  };
  positive(image_size, "image_size");
  positive(patch_size, "patch_size");
  positive(channels, "channels");
  positive(embed_dim, "embed_dim");
  positive(heads, "heads");
  positive(mlp_ratio, "mlp_ratio");
  positive(classes, "classes");
  if (layers < 0) throw ConfigError("backbone.layers must be non-negative");
  if (image_size % patch_size != 0) {
    throw ConfigError("backbone.image_size must be a multiple of backbone.patch_size");
  }
  if (embed_dim % heads != 0) {
    throw ConfigError("backbone.embed_dim must be divisible by backbone.heads");
  }
  if (!(ln_eps > 0.0)) throw ConfigError("backbone.ln_eps must be positive");
}

Image random_image(const BackboneConfig& config, Rng& rng) {
  Image img;
  img.height = img.width = static_cast<std::size_t>(config.image_size);
  img.channels = static_cast<std::size_t>(config.channels);
  img.pixels.resize(img.height * img.width * img.channels);
  for (auto& p : img.pixels) p = rng.normal();
  return img;
}

BackboneWeights BackboneWeights::zeros(const BackboneConfig& config) {
  config.validate();
  const auto d = static_cast<std::size_t>(config.embed_dim);
  const auto hidden = static_cast<std::size_t>(config.hidden_dim());
  BackboneWeights w;
  w.config = config;
  w.patch_w = Matrix(static_cast<std::size_t>(config.patch_dim()), d);
  w.patch_b = Matrix(1, d);
  w.cls = Matrix(1, d);
  w.pos = Matrix(static_cast<std::size_t>(config.tokens()), d);
  w.layers.resize(static_cast<std::size_t>(config.layers));
  for (auto& l : w.layers) {
    l.ln1_g = Matrix(1, d, 1.0);
    l.ln1_b = Matrix(1, d);
    l.wq = l.wk = l.wv = l.wo = Matrix(d, d);
    l.bq = l.bk = l.bv = l.bo = Matrix(1, d);
    l.ln2_g = Matrix(1, d, 1.0);
    l.ln2_b = Matrix(1, d);
    l.w1 = Matrix(d, hidden);
    l.b1 = Matrix(1, hidden);
    l.w2 = Matrix(hidden, d);
    l.b2 = Matrix(1, d);
  }
  w.ln_g = Matrix(1, d, 1.0);
  w.ln_b = Matrix(1, d);
  w.head_w = Matrix(d, static_cast<std::size_t>(config.classes));
  w.head_b = Matrix(1, static_cast<std::size_t>(config.classes));
  return w;
}

namespace {

template <class Self, class Ptr>
std::vector<std::pair<std::string, Ptr>> collect(Self& w) {
  std::vector<std::pair<std::string, Ptr>> out = {
      {"patch.w", &w.patch_w}, {"patch.b", &w.patch_b}, {"cls", &w.cls}, {"pos", &w.pos}};
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    out.insert(out.end(), {{p + "ln1.g", &l.ln1_g},
                           {p + "ln1.b", &l.ln1_b},
                           {p + "wq", &l.wq},
                           {p + "bq", &l.bq},
                           {p + "wk", &l.wk},
                           {p + "bk", &l.bk},
                           {p + "wv", &l.wv},
                           {p + "bv", &l.bv},
                           {p + "wo", &l.wo},
                           {p + "bo", &l.bo},
                           {p + "ln2.g", &l.ln2_g},
                           {p + "ln2.b", &l.ln2_b},
                           {p + "w1", &l.w1},
                           {p + "b1", &l.b1},
                           {p + "w2", &l.w2},
                           {p + "b2", &l.b2}});
  }
  out.insert(out.end(), {{"ln.g", &w.ln_g},
                         {"ln.b", &w.ln_b},
                         {"head.w", &w.head_w},
                         {"head.b", &w.head_b}});
  return out;
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> BackboneWeights::named_tensors() {
  return collect<BackboneWeights, Matrix*>(*this);
}

std::vector<std::pair<std::string, const Matrix*>> BackboneWeights::named_tensors() const {
  return collect<const BackboneWeights, const Matrix*>(*this);
}

void BackboneWeights::validate_shapes() const {
  const BackboneWeights reference = zeros(config);
  const auto want = reference.named_tensors();
  const auto have = named_tensors();
  if (want.size() != have.size()) {
    throw DimensionError("backbone has " + std::to_string(have.size()) + " tensors, config implies " +
                         std::to_string(want.size()));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (!want[i].second->same_shape(*have[i].second)) {
      throw DimensionError("backbone tensor '" + want[i].first + "' has shape " +
                           have[i].second->shape_string() + ", expected " +
                           want[i].second->shape_string());
    }
  }
}

BackboneWeights init_backbone(const BackboneConfig& config, Rng& rng) {
  BackboneWeights w = BackboneWeights::zeros(config);
  auto fill = [&rng](Matrix& m, double stddev) {
    for (auto& x : m.data()) x = rng.normal(0.0, stddev);
  };
  auto fan_in = [](const Matrix& m) { return 1.0 / std::sqrt(static_cast<double>(m.rows())); };
  for (auto& [name, m] : w.named_tensors()) {
    if (name.ends_with("ln1.g") || name.ends_with("ln2.g") || name == "ln.g" ||
        name.ends_with("ln1.b") || name.ends_with("ln2.b") || name == "ln.b") {
      continue;
    }
    if (m->rows() == 1) {
      fill(*m, 0.02);
    } else if (name == "pos") {
      fill(*m, 0.02);
    } else {
      fill(*m, fan_in(*m));
    }
  }
  return w;
}

std::string frozen_checksum(const BackboneWeights& weights) {
  Sha256 hash;
  for (const auto& [name, m] : weights.named_tensors()) {
    if (BackboneWeights::is_head(name)) continue;
    hash.update(name);
    hash.update(m->data());
  }
  return to_hex(hash.finish());
}

namespace vit {

Matrix extract_patches(const Image& image, const BackboneConfig& config) {
  const auto size = static_cast<std::size_t>(config.image_size);
  const auto channels = static_cast<std::size_t>(config.channels);
  if (image.height != size || image.width != size || image.channels != channels ||
      image.pixels.size() != size * size * channels) {
    throw DimensionError("image is " + std::to_string(image.height) + "x" +
                         std::to_string(image.width) + "x" + std::to_string(image.channels) +
                         ", config expects " + std::to_string(size) + "x" +
                         std::to_string(size) + "x" + std::to_string(channels));
  }
  const auto p = static_cast<std::size_t>(config.patch_size);
  const std::size_t per_side = size / p;
  Matrix out(per_side * per_side, p * p * channels);
  for (std::size_t pr = 0; pr < per_side; ++pr) {
    for (std::size_t pc = 0; pc < per_side; ++pc) {
      auto row = out.row_span(pr * per_side + pc);
      std::size_t k = 0;
      for (std::size_t r = 0; r < p; ++r)
        for (std::size_t c = 0; c < p; ++c)
          for (std::size_t ch = 0; ch < channels; ++ch)
            row[k++] = image.at(pr * p + r, pc * p + c, ch);
    }
  }
  return out;
}

Matrix patch_embed(const Image& image, const BackboneWeights& weights) {
  detail::PlainOps ops;
  return detail::embed(ops, image, weights);
}

Matrix mha(const Matrix& x_norm, const LayerWeights& layer, int heads) {
  if (x_norm.cols() != layer.wq.rows()) {
    throw DimensionError("mha: input " + x_norm.shape_string() + " does not match W_q " +
                         layer.wq.shape_string());
  }
  if (heads <= 0 || layer.wq.cols() % static_cast<std::size_t>(heads) != 0) {
    throw DimensionError("mha: embedding width not divisible by head count");
  }
  detail::PlainOps ops;
  return detail::mha_block(ops, x_norm, static_cast<const Matrix*>(nullptr), layer, heads);
}

Matrix ffn(const Matrix& x_norm, const LayerWeights& layer) {
  detail::PlainOps ops;
  return detail::ffn_block(ops, x_norm, static_cast<const Matrix*>(nullptr), layer);
}

namespace {

void check_consistency(const BackboneWeights& weights, const AdapterBank* adapters) {
  weights.config.validate();
  if (weights.layers.size() != static_cast<std::size_t>(weights.config.layers)) {
    throw ConfigError("backbone weights hold " + std::to_string(weights.layers.size()) +
                      " layers, config says " + std::to_string(weights.config.layers));
  }
  if (adapters != nullptr && !(adapters->backbone() == weights.config)) {
    throw ConfigError("adapter bank was built for a different backbone config");
  }
}

}  // namespace

Matrix forward(const Image& image, const BackboneWeights& weights, const AdapterBank* adapters,
               Mode mode, Rng* rng) {
  check_consistency(weights, adapters);
  detail::PlainOps ops;
  return detail::image_logits(ops, image, weights, adapters, mode, rng);
}

Matrix forward_batch(std::span<const Image> images, const BackboneWeights& weights,
                     const AdapterBank* adapters, Mode mode, Rng* rng) {
  check_consistency(weights, adapters);
  detail::PlainOps ops;
  return detail::batch_logits(ops, images, weights, adapters, mode, rng);
}

autodiff::Var forward_batch(autodiff::Tape& tape, std::span<const Image> images,
                            const BackboneWeights& weights, const AdapterBank* adapters,
                            Mode mode, Rng* rng) {
  check_consistency(weights, adapters);
  detail::TapeOps ops{tape};
  return detail::batch_logits(ops, images, weights, adapters, mode, rng);
}

}  // namespace vit
}  // namespace arcl
