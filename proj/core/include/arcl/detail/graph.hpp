// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Model graph written once against an evaluation backend. PlainOps runs the
// kernels directly; TapeOps records the same kernel calls on a Tape. Both
// walk identical code, so taped and untaped forwards agree bitwise.

#include <cmath>
#include <span>
#include <vector>

#include "arcl/arc.hpp"
#include "arcl/autodiff.hpp"
#include "arcl/errors.hpp"
#include "arcl/kernel.hpp"
#include "arcl/vit.hpp"

namespace arcl::detail {

struct PlainOps {
  using Value = Matrix;

  const Matrix& leaf(const Matrix& m) { return m; }
  Matrix constant(Matrix m) { return m; }
  Matrix matmul(const Matrix& a, const Matrix& b) { return kernel::matmul(a, b); }
  Matrix add(const Matrix& a, const Matrix& b) {
    return a.same_shape(b) ? kernel::add(a, b) : kernel::add_row(a, b);
  }
  Matrix scale(const Matrix& a, double s) { return kernel::scale(a, s); }
  Matrix layernorm(const Matrix& x, const Matrix& g, const Matrix& b, double eps) {
    return kernel::layernorm(x, g.data(), b.data(), eps);
  }
  Matrix softmax_rows(const Matrix& a) { return kernel::softmax_rows(a); }
  Matrix gelu(const Matrix& a) { return kernel::gelu(a); }
  Matrix transpose(const Matrix& a) { return kernel::transpose(a); }
  Matrix concat_rows(std::span<const Matrix> parts) { return kernel::concat_rows(parts); }
  Matrix concat_cols(std::span<const Matrix> parts) { return kernel::concat_cols(parts); }
  Matrix slice_rows(const Matrix& a, std::size_t s, std::size_t n) {
    return kernel::slice_rows(a, s, n);
  }
  Matrix slice_cols(const Matrix& a, std::size_t s, std::size_t n) {
    return kernel::slice_cols(a, s, n);
  }
  Matrix scale_cols(const Matrix& a, const Matrix& c) { return kernel::scale_cols(a, c.data()); }
  Matrix dropout(const Matrix& a, double rate, Rng& rng) {
    return kernel::hadamard(a, kernel::dropout_mask(a.rows(), a.cols(), rate, rng));
  }
};

struct TapeOps {
  using Value = autodiff::Var;
  using Var = autodiff::Var;

  autodiff::Tape& tape;

  Var leaf(const Matrix& m) { return tape.leaf(m); }
  Var constant(Matrix m) { return tape.constant(std::move(m)); }
  Var matmul(Var a, Var b) { return tape.matmul(a, b); }
  Var add(Var a, Var b) { return tape.add(a, b); }
  Var scale(Var a, double s) { return tape.scale(a, s); }
  Var layernorm(Var x, Var g, Var b, double eps) { return tape.layernorm(x, g, b, eps); }
  Var softmax_rows(Var a) { return tape.softmax_rows(a); }
  Var gelu(Var a) { return tape.gelu(a); }
  Var transpose(Var a) { return tape.transpose(a); }
  Var concat_rows(std::span<const Var> parts) { return tape.concat_rows(parts); }
  Var concat_cols(std::span<const Var> parts) { return tape.concat_cols(parts); }
  Var slice_rows(Var a, std::size_t s, std::size_t n) { return tape.slice_rows(a, s, n); }
  Var slice_cols(Var a, std::size_t s, std::size_t n) { return tape.slice_cols(a, s, n); }
  Var scale_cols(Var a, Var c) { return tape.scale_cols(a, c); }
  Var dropout(Var a, double rate, Rng& rng) { return tape.dropout(a, rate, rng); }
};

/// Adapter hidden features x W_down diag(c) (+ dropout in train mode).
template <class Ops>
typename Ops::Value arc_hidden(Ops& ops, const typename Ops::Value& x,
                               const AdapterBank& bank, int layer, Site site, Mode mode,
                               Rng* rng) {
  using Value = typename Ops::Value;
  Value h = ops.matmul(x, ops.leaf(bank.down(layer, site)));
  h = ops.scale_cols(h, ops.leaf(bank.coef(layer, site)));
  const double rate = bank.config().dropout_rate;
  if (mode == Mode::train && rate > 0.0) {
    if (rng == nullptr) throw ContractError("adapter dropout in train mode needs an Rng");
    h = ops.dropout(h, rate, *rng);
  }
  return h;
}

/// Adapter output without the identity term: x A + 1 bᵀ.
template <class Ops>
typename Ops::Value arc_delta(Ops& ops, const typename Ops::Value& x, const AdapterBank& bank,
                              int layer, Site site, Mode mode, Rng* rng) {
  using Value = typename Ops::Value;
  if (bank.config().variant == Variant::full_rank) {
    return ops.matmul(x, ops.leaf(bank.delta(layer, site)));
  }
  Value h = arc_hidden(ops, x, bank, layer, site, mode, rng);
  const Matrix* up = bank.up(layer, site);
  Value up_value = up != nullptr ? Value(ops.leaf(*up))
                                 : ops.transpose(ops.leaf(bank.down(layer, site)));
  return ops.add(ops.matmul(h, up_value), ops.leaf(bank.bias(layer, site)));
}

template <class Ops>
typename Ops::Value arc_sequential(Ops& ops, const typename Ops::Value& x,
                                   const AdapterBank& bank, int layer, Site site, Mode mode,
                                   Rng* rng) {
  return ops.add(arc_delta(ops, x, bank, layer, site, mode, rng), x);
}

/// x W + b, plus delta W for a parallel adapter branch.
template <class Ops>
typename Ops::Value project(Ops& ops, const typename Ops::Value& x,
                            const typename Ops::Value* delta, const Matrix& w,
                            const Matrix& b) {
  using Value = typename Ops::Value;
  Value y = ops.matmul(x, ops.leaf(w));
  if (delta != nullptr) y = ops.add(y, ops.matmul(*delta, ops.leaf(w)));
  return ops.add(y, ops.leaf(b));
}

template <class Ops>
typename Ops::Value mha_block(Ops& ops, const typename Ops::Value& x_norm,
                              const typename Ops::Value* delta, const LayerWeights& lw,
                              int heads) {
  using Value = typename Ops::Value;
  const Value q = project(ops, x_norm, delta, lw.wq, lw.bq);
  const Value k = project(ops, x_norm, delta, lw.wk, lw.bk);
  const Value v = project(ops, x_norm, delta, lw.wv, lw.bv);
  const std::size_t dim = lw.wq.cols() / static_cast<std::size_t>(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<Value> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
    const Value qh = ops.slice_cols(q, h * dim, dim);
    const Value kh = ops.slice_cols(k, h * dim, dim);
    const Value vh = ops.slice_cols(v, h * dim, dim);
    const Value scores = ops.scale(ops.matmul(qh, ops.transpose(kh)), inv_sqrt);
    outs.push_back(ops.matmul(ops.softmax_rows(scores), vh));
  }
  const Value concat = ops.concat_cols(std::span<const Value>(outs));
  return ops.add(ops.matmul(concat, ops.leaf(lw.wo)), ops.leaf(lw.bo));
}

template <class Ops>
typename Ops::Value ffn_block(Ops& ops, const typename Ops::Value& x_norm,
                              const typename Ops::Value* delta, const LayerWeights& lw) {
  using Value = typename Ops::Value;
  const Value hidden = ops.gelu(project(ops, x_norm, delta, lw.w1, lw.b1));
  return ops.add(ops.matmul(hidden, ops.leaf(lw.w2)), ops.leaf(lw.b2));
}

template <class Ops>
typename Ops::Value embed(Ops& ops, const Image& image, const BackboneWeights& w) {
  using Value = typename Ops::Value;
  const Value patches = ops.constant(vit::extract_patches(image, w.config));
  const Value tokens = ops.add(ops.matmul(patches, ops.leaf(w.patch_w)), ops.leaf(w.patch_b));
  const std::vector<Value> parts = {Value(ops.leaf(w.cls)), tokens};
  return ops.add(ops.concat_rows(std::span<const Value>(parts)), ops.leaf(w.pos));
}

/// One pre-norm block pair with adapter hooks.
template <class Ops>
typename Ops::Value encoder_layer(Ops& ops, const typename Ops::Value& x,
                                  const BackboneWeights& w, int layer,
                                  const AdapterBank* bank, Mode mode, Rng* rng) {
  using Value = typename Ops::Value;
  const LayerWeights& lw = w.layers[static_cast<std::size_t>(layer - 1)];
  const double eps = w.config.ln_eps;
  auto hook = [&](Site s) { return bank != nullptr ? bank->hook(layer, s) : nullptr; };

  // Applies a before_* hook: sequential rewrites x_norm, parallel yields a
  // delta branch that rides along the block's input projections.
  auto before = [&](Value& x_norm, Value& delta_store, Site s) -> const Value* {
    const Hook* h = hook(s);
    if (h == nullptr) return nullptr;
    if (h->form == Form::sequential) {
      x_norm = arc_sequential(ops, x_norm, *bank, layer, s, mode, rng);
      return nullptr;
    }
    delta_store = arc_delta(ops, x_norm, *bank, layer, s, mode, rng);
    return &delta_store;
  };
  auto after = [&](Value out, Site s) {
    if (hook(s) != nullptr) out = arc_sequential(ops, out, *bank, layer, s, mode, rng);
    return out;
  };

  Value x_norm = ops.layernorm(x, ops.leaf(lw.ln1_g), ops.leaf(lw.ln1_b), eps);
  Value delta_store{};
  const Value* delta = before(x_norm, delta_store, Site::before_mha);
  Value attn = after(mha_block(ops, x_norm, delta, lw, w.config.heads), Site::after_mha);
  const Value mid = ops.add(attn, x);

  Value y_norm = ops.layernorm(mid, ops.leaf(lw.ln2_g), ops.leaf(lw.ln2_b), eps);
  Value ffn_delta_store{};
  const Value* ffn_delta = before(y_norm, ffn_delta_store, Site::before_ffn);
  Value ffn_out = after(ffn_block(ops, y_norm, ffn_delta, lw), Site::after_ffn);
  return ops.add(ffn_out, mid);
}

template <class Ops>
typename Ops::Value image_logits(Ops& ops, const Image& image, const BackboneWeights& w,
                                 const AdapterBank* bank, Mode mode, Rng* rng) {
  using Value = typename Ops::Value;
  Value x = embed(ops, image, w);
  for (int l = 1; l <= w.config.layers; ++l) x = encoder_layer(ops, x, w, l, bank, mode, rng);
  const Value cls = ops.slice_rows(x, 0, 1);
  const Value normed = ops.layernorm(cls, ops.leaf(w.ln_g), ops.leaf(w.ln_b), w.config.ln_eps);
  return ops.add(ops.matmul(normed, ops.leaf(w.head_w)), ops.leaf(w.head_b));
}

template <class Ops>
typename Ops::Value batch_logits(Ops& ops, std::span<const Image> images,
                                 const BackboneWeights& w, const AdapterBank* bank, Mode mode,
                                 Rng* rng) {
  using Value = typename Ops::Value;
  if (images.empty()) throw ContractError("forward: empty image batch");
  std::vector<Value> rows;
  rows.reserve(images.size());
  for (const auto& img : images) rows.push_back(image_logits(ops, img, w, bank, mode, rng));
  if (rows.size() == 1) return rows.front();
  return ops.concat_rows(std::span<const Value>(rows));
}

}  // namespace arcl::detail
