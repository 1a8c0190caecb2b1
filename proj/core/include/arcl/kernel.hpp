// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "arcl/matrix.hpp"
#include "arcl/rng.hpp"

/// Dense kernels shared by the model, autodiff and analysis code. All
/// functions are pure; shape violations throw DimensionError.
namespace arcl::kernel {

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
/// a + 1 * rowᵀ: adds a 1 x cols row to every row of a.
Matrix add_row(const Matrix& a, const Matrix& row);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);
/// Multiplies column j of a by col_scale[j], i.e. a * diag(col_scale).
Matrix scale_cols(const Matrix& a, std::span<const double> col_scale);
Matrix slice_rows(const Matrix& a, std::size_t start, std::size_t count);
Matrix slice_cols(const Matrix& a, std::size_t start, std::size_t count);
Matrix concat_rows(std::span<const Matrix> parts);
Matrix concat_cols(std::span<const Matrix> parts);
/// Sum over rows, returned as a 1 x cols row.
Matrix col_sums(const Matrix& a);

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& a);

inline constexpr double kDefaultLnEps = 1e-6;

/// Per-row (x - mean) / sqrt(var + eps) * gamma + beta, population variance.
Matrix layernorm(const Matrix& a, std::span<const double> gamma,
                 std::span<const double> beta, double eps = kDefaultLnEps);

/// Exact GELU, x * Phi(x) with Phi written through std::erf. The tanh
/// approximation is deliberately not used.
double gelu(double x);
/// d/dx of the exact GELU: Phi(x) + x * phi(x).
double gelu_grad(double x);
Matrix gelu(const Matrix& a);

double sum(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);

struct Svd {
  Matrix u;  // rows x k, orthonormal columns
  Vector s;  // k values, non-negative, descending
  Matrix v;  // cols x k, orthonormal columns
};

inline constexpr double kSvdTolerance = 1e-12;
inline constexpr int kSvdMaxSweeps = 60;

/// Thin SVD by one-sided (Hestenes) Jacobi rotations, k = min(rows, cols).
///
/// A sweep rotates every column pair whose normalized inner product
/// |<a_i, a_j>| / (|a_i| |a_j|) exceeds kSvdTolerance; the iteration stops at
/// the first sweep in which no pair does. Throws NumericalError carrying the
/// largest remaining normalized inner product after kSvdMaxSweeps sweeps.
/// Left singular vectors belonging to (numerically) zero singular values are
/// completed to an orthonormal set by Gram-Schmidt.
Svd svd(const Matrix& a);

/// U * diag(s) * Vᵀ.
Matrix reconstruct(const Svd& d);

}  // namespace arcl::kernel

namespace arcl::kernel {

/// Mean over rows of -log softmax(logits)[label], computed through
/// log-sum-exp. `labels` has one entry per row, each in [0, cols).
double cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// 1/(1-rate). Draws one uniform per entry in row-major order; rate == 0
/// returns all ones without drawing.
Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng);

}  // namespace arcl::kernel
