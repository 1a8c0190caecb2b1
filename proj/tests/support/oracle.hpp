// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Scalar-loop reference implementations used as test oracles. Nothing here
// calls into arcl::kernel, so a kernel bug cannot hide behind itself.

#include <algorithm>
#include <cmath>
#include <vector>

#include "arcl/arc.hpp"
#include "arcl/matrix.hpp"
#include "arcl/vit.hpp"

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline Rows rows_of(const arcl::Matrix& m) {
  Rows out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

inline arcl::Matrix matrix_of(const Rows& a) {
  arcl::Matrix m(a.size(), a.empty() ? 0 : a[0].size());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = a[r][c];
  return m;
}

inline Rows matmul(const Rows& a, const Rows& b) {
  const std::size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
  Rows out(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      long double acc = 0.0L;
      for (std::size_t p = 0; p < k; ++p) acc += static_cast<long double>(a[i][p]) * b[p][j];
      out[i][j] = static_cast<double>(acc);
    }
  return out;
}

inline Rows transpose(const Rows& a) {
  Rows out(a.empty() ? 0 : a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) out[j][i] = a[i][j];
  return out;
}

/// a + each row of `row` (1 x n) or elementwise when shapes agree.
inline Rows plus(const Rows& a, const Rows& b) {
  Rows out = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) out[i][j] += b.size() == 1 ? b[0][j] : b[i][j];
  return out;
}

inline Rows layernorm(const Rows& x, const Rows& g, const Rows& b, double eps) {
  Rows out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = static_cast<double>(x[i].size());
    double mean = 0.0;
    for (double v : x[i]) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= n;
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      out[i][j] = (x[i][j] - mean) / std::sqrt(var + eps) * g[0][j] + b[0][j];
    }
  }
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline Rows attention(const Rows& q, const Rows& k, const Rows& v, int heads) {
  const std::size_t t = q.size(), d = q[0].size(), dh = d / static_cast<std::size_t>(heads);
  Rows out(t, std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> score(t);
      double top = -INFINITY;
      for (std::size_t j = 0; j < t; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q[i][h * dh + c] * k[j][h * dh + c];
        score[j] = s / std::sqrt(static_cast<double>(dh));
        top = std::max(top, score[j]);
      }
      double z = 0.0;
      for (double& s : score) z += (s = std::exp(s - top));
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t c = 0; c < dh; ++c) out[i][h * dh + c] += score[j] / z * v[j][h * dh + c];
    }
  }
  return out;
}

/// Dense linear part of the adapter at (layer, site), rebuilt from the raw
/// tensors with loops.
inline Rows adaptation(const arcl::AdapterBank& bank, int layer, arcl::Site site) {
  if (bank.config().variant == arcl::Variant::full_rank) return rows_of(bank.delta(layer, site));
  const Rows down = rows_of(bank.down(layer, site));
  const arcl::Matrix* up_m = bank.up(layer, site);
  const Rows up = up_m != nullptr ? rows_of(*up_m) : transpose(down);
  const auto& c = bank.coef(layer, site);
  Rows scaled = down;
  for (auto& row : scaled)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] *= c[j];
  return matmul(scaled, up);
}

inline Rows adapter_bias(const arcl::AdapterBank& bank, int layer, arcl::Site site) {
  if (bank.config().variant == arcl::Variant::full_rank) {
    return Rows(1, std::vector<double>(static_cast<std::size_t>(bank.backbone().embed_dim), 0.0));
  }
  return rows_of(bank.bias(layer, site));
}

/// x A + 1 bᵀ.
inline Rows adapter_delta(const arcl::AdapterBank& bank, int layer, arcl::Site site, const Rows& x) {
  return plus(matmul(x, adaptation(bank, layer, site)), adapter_bias(bank, layer, site));
}

/// Eval-mode logits (1 x K) of one image, written from scratch.
inline Rows forward(const arcl::Image& img, const arcl::BackboneWeights& w,
                    const arcl::AdapterBank* bank) {
  using arcl::Site;
  const auto& cfg = w.config;
  const std::size_t p = static_cast<std::size_t>(cfg.patch_size);
  const std::size_t grid = static_cast<std::size_t>(cfg.image_size) / p;
  const std::size_t ch = static_cast<std::size_t>(cfg.channels);
  Rows patches;
  for (std::size_t pr = 0; pr < grid; ++pr)
    for (std::size_t pc = 0; pc < grid; ++pc) {
      std::vector<double> flat;
      for (std::size_t r = 0; r < p; ++r)
        for (std::size_t c = 0; c < p; ++c)
          for (std::size_t k = 0; k < ch; ++k) flat.push_back(img.at(pr * p + r, pc * p + c, k));
      patches.push_back(flat);
    }
  Rows x = {rows_of(w.cls)[0]};
  for (const auto& row : plus(matmul(patches, rows_of(w.patch_w)), rows_of(w.patch_b))) x.push_back(row);
  x = plus(x, rows_of(w.pos));

  auto has = [&](int l, Site s) { return bank != nullptr && bank->hook(l, s) != nullptr; };
  auto parallel = [&](int l, Site s) {
    return has(l, s) && bank->hook(l, s)->form == arcl::Form::parallel;
  };
  // x W + b, plus the parallel branch routed through W.
  auto proj = [&](const Rows& in, const Rows* delta, const arcl::Matrix& wm, const arcl::Matrix& bm) {
    Rows y = matmul(in, rows_of(wm));
    if (delta != nullptr) y = plus(y, matmul(*delta, rows_of(wm)));
    return plus(y, rows_of(bm));
  };

  for (int l = 1; l <= cfg.layers; ++l) {
    const auto& lw = w.layers[static_cast<std::size_t>(l - 1)];
    Rows xn = layernorm(x, rows_of(lw.ln1_g), rows_of(lw.ln1_b), cfg.ln_eps);
    Rows delta;
    const Rows* dp = nullptr;
    if (parallel(l, Site::before_mha)) {
      delta = adapter_delta(*bank, l, Site::before_mha, xn);
      dp = &delta;
    } else if (has(l, Site::before_mha)) {
      xn = plus(adapter_delta(*bank, l, Site::before_mha, xn), xn);
    }
    Rows attn = attention(proj(xn, dp, lw.wq, lw.bq), proj(xn, dp, lw.wk, lw.bk),
                          proj(xn, dp, lw.wv, lw.bv), cfg.heads);
    attn = plus(matmul(attn, rows_of(lw.wo)), rows_of(lw.bo));
    if (has(l, Site::after_mha)) attn = plus(adapter_delta(*bank, l, Site::after_mha, attn), attn);
    x = plus(attn, x);

    Rows yn = layernorm(x, rows_of(lw.ln2_g), rows_of(lw.ln2_b), cfg.ln_eps);
    dp = nullptr;
    if (parallel(l, Site::before_ffn)) {
      delta = adapter_delta(*bank, l, Site::before_ffn, yn);
      dp = &delta;
    } else if (has(l, Site::before_ffn)) {
      yn = plus(adapter_delta(*bank, l, Site::before_ffn, yn), yn);
    }
    Rows hidden = proj(yn, dp, lw.w1, lw.b1);
    for (auto& row : hidden)
      for (double& v : row) v = gelu(v);
    Rows f = plus(matmul(hidden, rows_of(lw.w2)), rows_of(lw.b2));
    if (has(l, Site::after_ffn)) f = plus(adapter_delta(*bank, l, Site::after_ffn, f), f);
    x = plus(f, x);
  }
  const Rows cls = layernorm({x[0]}, rows_of(w.ln_g), rows_of(w.ln_b), cfg.ln_eps);
  return plus(matmul(cls, rows_of(w.head_w)), rows_of(w.head_b));
}

inline double max_abs_diff(const Rows& a, const arcl::Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) worst = std::max(worst, std::abs(a[i][j] - b(i, j)));
  return worst;
}

/// Columns of a random n x k matrix made orthonormal by modified
/// Gram-Schmidt (run twice for stability).
template <class Draw>
Rows random_orthonormal(std::size_t n, std::size_t k, Draw&& draw) {
  Rows q(k, std::vector<double>(n));  // stored as rows = columns
  for (std::size_t j = 0; j < k; ++j) {
    for (double& v : q[j]) v = draw();
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) {
        double dot = 0.0;
        for (std::size_t r = 0; r < n; ++r) dot += q[i][r] * q[j][r];
        for (std::size_t r = 0; r < n; ++r) q[j][r] -= dot * q[i][r];
      }
      double norm = 0.0;
      for (double v : q[j]) norm += v * v;
      norm = std::sqrt(norm);
      for (double& v : q[j]) v /= norm;
    }
  }
  return transpose(q);
}

}  // namespace oracle
