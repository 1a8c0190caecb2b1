// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "arcl/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "arcl/errors.hpp"

namespace arcl::kernel {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() +
                         " vs " + b.shape_string());
  }
}

void require_width(std::size_t expected, std::size_t got, const char* op,
                   const char* what) {
  if (expected != got) {
    throw DimensionError(std::string(op) + ": " + what + " has length " +
                         std::to_string(got) + ", expected " + std::to_string(expected));
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + a.shape_string() + " by " +
                         b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row_span(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto b_row = b.row_span(k);
      for (std::size_t j = 0; j < n; ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Matrix add_row(const Matrix& a, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: cannot broadcast " + row.shape_string() + " over " +
                         a.shape_string());
  }
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = out.row_span(i);
    for (std::size_t j = 0; j < a.cols(); ++j) r[j] += row[j];
  }
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (auto& x : out.data()) x *= s;
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Matrix scale_cols(const Matrix& a, std::span<const double> col_scale) {
  require_width(a.cols(), col_scale.size(), "scale_cols", "scale vector");
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = out.row_span(i);
    for (std::size_t j = 0; j < a.cols(); ++j) r[j] *= col_scale[j];
  }
  return out;
}

Matrix slice_rows(const Matrix& a, std::size_t start, std::size_t count) {
  if (start + count > a.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + a.shape_string());
  }
  Matrix out(count, a.cols());
  std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(start * a.cols()),
              count * a.cols(), out.data().begin());
  return out;
}

Matrix slice_cols(const Matrix& a, std::size_t start, std::size_t count) {
  if (start + count > a.cols()) {
    throw DimensionError("slice_cols: cols [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + a.shape_string());
  }
  Matrix out(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, start + j);
  return out;
}

Matrix concat_rows(std::span<const Matrix> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_width(parts[0].cols(), p.cols(), "concat_rows", "part width");
    rows += p.rows();
  }
  Matrix out(rows, parts[0].cols());
  auto it = out.data().begin();
  for (const auto& p : parts) it = std::copy(p.data().begin(), p.data().end(), it);
  return out;
}

Matrix concat_cols(std::span<const Matrix> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_width(parts[0].rows(), p.rows(), "concat_cols", "part height");
    cols += p.cols();
  }
  Matrix out(parts[0].rows(), cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out(i, offset + j) = p(i, j);
    offset += p.cols();
  }
  return out;
}

Matrix col_sums(const Matrix& a) {
  Matrix out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a(i, j);
  return out;
}

Matrix softmax_rows(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row_span(i);
    auto o = out.row_span(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (auto& x : o) x /= total;
  }
  return out;
}

Matrix layernorm(const Matrix& a, std::span<const double> gamma,
                 std::span<const double> beta, double eps) {
  require_width(a.cols(), gamma.size(), "layernorm", "gamma");
  require_width(a.cols(), beta.size(), "layernorm", "beta");
  if (!(eps > 0.0)) throw ContractError("layernorm: eps must be positive");
  Matrix out(a.rows(), a.cols());
  const double n = static_cast<double>(a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row_span(i);
    auto o = out.row_span(i);
    double mean = 0.0;
    for (double x : in) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : in) var += (x - mean) * (x - mean);
    var /= n;
    const double rstd = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < in.size(); ++j)
      o[j] = (in[j] - mean) * rstd * gamma[j] + beta[j];
  }
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

Matrix gelu(const Matrix& a) {
  Matrix out = a;
  for (auto& x : out.data()) x = gelu(x);
  return out;
}

double sum(const Matrix& a) {
  return std::accumulate(a.data().begin(), a.data().end(), 0.0);
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double x : a.data()) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.data().begin(), a.data().end(),
                     [](double x) { return std::isfinite(x); });
}

namespace {

// Jacobi on a tall (rows >= cols) matrix.
Svd svd_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  // Work column-major: column j of the iterate lives in w[j].
  std::vector<Vector> w(n, Vector(m));
  std::vector<Vector> v(n, Vector(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) w[j][i] = a(i, j);
    v[j][j] = 1.0;
  }

  auto dot = [](const Vector& x, const Vector& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return acc;
  };

  bool converged = n < 2;
  double residual = 0.0;
  for (int sweep = 0; sweep < kSvdMaxSweeps && !converged; ++sweep) {
    residual = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(w[p], w[p]);
        const double beta = dot(w[q], w[q]);
        const double gamma = dot(w[p], w[q]);
        if (alpha == 0.0 || beta == 0.0) continue;
        const double off = std::abs(gamma) / std::sqrt(alpha * beta);
        residual = std::max(residual, off);
        if (off <= kSvdTolerance) continue;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w[p][i];
          const double wq = w[q][i];
          w[p][i] = c * wp - s * wq;
          w[q][i] = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v[p][i];
          const double vq = v[q][i];
          v[p][i] = c * vp - s * vq;
          v[q][i] = s * vp + c * vq;
        }
      }
    }
    converged = residual <= kSvdTolerance;
  }
  if (!converged) {
    throw NumericalError("svd: Jacobi iteration did not converge in " +
                             std::to_string(kSvdMaxSweeps) + " sweeps",
                         residual);
  }

  Vector norms(n);
  for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(dot(w[j], w[j]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  Svd out{Matrix(m, n), Vector(n), Matrix(n, n)};
  const double s_max = n > 0 ? norms[order[0]] : 0.0;
  // Columns this small carry no direction information; their left vectors
  // are rebuilt below.
  const double null_threshold = s_max * 1e-14;
  std::vector<bool> null_col(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.s[k] = norms[j];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v[j][i];
    if (norms[j] == 0.0 || norms[j] <= null_threshold) {
      null_col[k] = true;
      continue;
    }
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = w[j][i] / norms[j];
  }

  // Gram-Schmidt completion of U against the columns already fixed. Of the
  // m unit vectors the one with the largest residual is the best
  // conditioned; at least one has residual >= sqrt((m - n + 1) / m).
  for (std::size_t k = 0; k < n; ++k) {
    if (!null_col[k]) continue;
    Vector best;
    double best_len = -1.0;
    for (std::size_t e = 0; e < m; ++e) {
      Vector cand(m, 0.0);
      cand[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k2 = 0; k2 < n; ++k2) {
          if (k2 == k || (null_col[k2] && k2 > k)) continue;
          double proj = 0.0;
          for (std::size_t i = 0; i < m; ++i) proj += out.u(i, k2) * cand[i];
          for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * out.u(i, k2);
        }
      }
      const double len = std::sqrt(dot(cand, cand));
      if (len > best_len) {
        best_len = len;
        best = std::move(cand);
      }
    }
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = best[i] / best_len;
  }
  return out;
}

}  // namespace

Svd svd(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) throw DimensionError("svd: empty matrix");
  if (!all_finite(a)) throw ContractError("svd: input contains non-finite values");
  if (a.rows() >= a.cols()) return svd_tall(a);
  Svd t = svd_tall(transpose(a));
  return {std::move(t.v), std::move(t.s), std::move(t.u)};
}

Matrix reconstruct(const Svd& d) {
  return matmul(scale_cols(d.u, d.s), transpose(d.v));
}

}  // namespace arcl::kernel

namespace arcl::kernel {

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + logits.shape_string());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
      throw ContractError("cross_entropy: label " + std::to_string(y) + " out of range");
    }
    auto row = logits.row_span(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double acc = 0.0;
    for (double z : row) acc += std::exp(z - mx);
    total += (mx + std::log(acc)) - row[static_cast<std::size_t>(y)];
  }
  return total / static_cast<double>(logits.rows());
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout: rate must be in [0, 1)");
  Matrix mask(rows, cols, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& m : mask.data()) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

}  // namespace arcl::kernel
