// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "arcl/reparam.hpp"

#include <algorithm>

#include "arcl/errors.hpp"
#include "arcl/kernel.hpp"

namespace arcl {
namespace {

namespace k = arcl::kernel;

// Input side: x_norm -> (x_norm (A [+ I]) + b) W + b_W.
void fold_input(Matrix& w, Matrix& b_w, const Matrix& mixed, const Matrix& bias) {
  b_w = k::add(b_w, k::matmul(bias, w));
  w = k::matmul(mixed, w);
}

// Output side: y = z W + b_W -> y (A + I) + b.
void fold_output(Matrix& w, Matrix& b_w, const Matrix& mixed, const Matrix& bias) {
  b_w = k::add(k::matmul(b_w, mixed), bias);
  w = k::matmul(w, mixed);
}

}  // namespace

FusedWeights fuse(const BackboneWeights& weights, const AdapterBank& bank) {
  if (bank.mode() == Mode::train) {
    throw ContractError("fuse: adapter bank is in train mode; switch it to eval first");
  }
  if (!(bank.backbone() == weights.config)) {
    throw ConfigError("fuse: adapter bank was built for a different backbone config");
  }
  weights.validate_shapes();

  FusedWeights out{weights, {}};
  const auto d = static_cast<std::size_t>(weights.config.embed_dim);
  const Matrix identity = Matrix::identity(d);
  for (const Hook& h : bank.hooks().entries) {
    const Matrix a = bank.adaptation_matrix(h.layer, h.site);
    const Matrix bias = bank.adaptation_bias(h.layer, h.site);
    // Parallel branches add A W next to W, i.e. multiply W by (A + I) too,
    // but without the identity term inside the branch.
    const Matrix mixed = k::add(a, identity);
    LayerWeights& lw = out.weights.layers[static_cast<std::size_t>(h.layer - 1)];
    switch (h.site) {
      case Site::before_mha:
        for (auto [w, b] : {std::pair{&lw.wq, &lw.bq}, {&lw.wk, &lw.bk}, {&lw.wv, &lw.bv}}) {
          if (h.form == Form::parallel) {
            *b = k::add(*b, k::matmul(bias, *w));
            *w = k::add(*w, k::matmul(a, *w));
          } else {
            fold_input(*w, *b, mixed, bias);
          }
        }
        break;
      case Site::before_ffn:
        if (h.form == Form::parallel) {
          lw.b1 = k::add(lw.b1, k::matmul(bias, lw.w1));
          lw.w1 = k::add(lw.w1, k::matmul(a, lw.w1));
        } else {
          fold_input(lw.w1, lw.b1, mixed, bias);
        }
        break;
      case Site::after_mha:
        if (h.form == Form::parallel) throw ConfigError("fuse: parallel form at after_mha");
        fold_output(lw.wo, lw.bo, mixed, bias);
        break;
      case Site::after_ffn:
        if (h.form == Form::parallel) throw ConfigError("fuse: parallel form at after_ffn");
        fold_output(lw.w2, lw.b2, mixed, bias);
        break;
    }
  }
  return out;
}

double verify_fusion(const BackboneWeights& weights, const AdapterBank& bank,
                     const FusedWeights& fused, int trials, Rng& rng) {
  if (trials < 1) throw ContractError("verify_fusion: trials must be at least 1");
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Image img = random_image(weights.config, rng);
    const Matrix adapted = vit::forward(img, weights, &bank, Mode::eval);
    const Matrix plain = vit::forward(img, fused.weights, nullptr, Mode::eval);
    worst = std::max(worst, k::max_abs_diff(adapted, plain));
  }
  return worst;
}

}  // namespace arcl
