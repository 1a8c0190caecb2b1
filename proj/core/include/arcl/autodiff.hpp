// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "arcl/matrix.hpp"
#include "arcl/rng.hpp"

namespace arcl::autodiff {

/// Handle to a node recorded on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
};

/// Parameter name -> gradient, same shape as the parameter.
using GradStore = std::map<std::string, Matrix>;

enum class Op {
  leaf,
  matmul,
  add,
  add_row,
  scale,
  layernorm,
  softmax_rows,
  gelu,
  transpose,
  concat_rows,
  concat_cols,
  slice_rows,
  slice_cols,
  scale_cols,
  dropout,
  mean,
  sum,
  cross_entropy,
};

/// Append-only record of primitive applications for reverse-mode
/// differentiation.
///
/// Node ids are assigned in creation order and every op only accepts inputs
/// that already exist, so ids are a topological order. Forward values are
/// produced by the same arcl::kernel functions a tape-free evaluation uses,
/// which makes taped and untaped forwards bitwise identical.
///
/// A parameter is a leaf registered under a name. Registering it once and
/// reusing the Var at several sites (or through transpose()) makes backward
/// accumulate the sum of every site's contribution into one gradient.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a named parameter. The tape copies the value and remembers
  /// the address of `value` so later leaf(value) calls resolve to this Var.
  Var parameter(std::string name, const Matrix& value, bool trainable);
  /// Unnamed leaf that never receives a gradient.
  Var constant(Matrix value);
  /// Var previously registered for this object, or a fresh constant.
  Var leaf(const Matrix& value);

  Var matmul(Var a, Var b);
  /// Elementwise a + b, or a + 1*bᵀ when b is a 1 x a.cols() row.
  Var add(Var a, Var b);
  Var scale(Var a, double s);
  Var layernorm(Var x, Var gamma, Var beta, double eps);
  Var softmax_rows(Var a);
  Var gelu(Var a);
  Var transpose(Var a);
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(std::span<const Var> parts);
  Var slice_rows(Var a, std::size_t start, std::size_t count);
  Var slice_cols(Var a, std::size_t start, std::size_t count);
  /// a * diag(c) for a 1 x a.cols() row c.
  Var scale_cols(Var a, Var c);
  /// Inverted dropout. The sampled mask (0 or 1/(1-rate)) is saved on the
  /// node so backward is exact for that draw. rate == 0 draws nothing.
  Var dropout(Var a, double rate, Rng& rng);
  Var mean(Var a);
  Var sum(Var a);
  Var cross_entropy(Var logits, std::span<const int> labels);

  /// Applies an attribute-free primitive by name ("matmul", "add",
  /// "transpose", "softmax_rows", "gelu", "mean", "sum", "scale_cols",
  /// "concat_rows", "concat_cols"). Any other name is a ContractError.
  Var apply(std::string_view primitive, std::span<const Var> inputs);

  const Matrix& value(Var v) const;
  double scalar(Var v) const;
  Op op(Var v) const;
  std::span<const std::size_t> inputs(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  /// Number of nodes visited by the most recent backward().
  std::size_t last_backward_visits() const noexcept { return last_visits_; }

  /// Reverse sweep from a 1 x 1 output. Returns gradients for every trainable
  /// parameter the output depends on; frozen parameters and unreachable
  /// ones are absent.
  GradStore backward(Var output);

 private:
  struct Node {
    Op op = Op::leaf;
    std::vector<std::size_t> inputs;
    Matrix value;
    Matrix saved;         // softmax / xhat / dropout mask
    Vector saved_rows;    // layernorm 1/std per row
    double attr = 0.0;    // scale factor
    std::size_t start = 0;
    std::vector<int> labels;
    int param = -1;
    bool needs_grad = false;
  };
  struct Param {
    std::string name;
    bool trainable = false;
    std::size_t node = 0;
  };

  const Node& node(Var v) const;
  Var push(Node n);

  std::vector<Node> nodes_;
  std::vector<Param> params_;
  std::unordered_map<const Matrix*, Var> bound_;
  std::size_t last_visits_ = 0;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
  double tol = 0.0;
  bool passed = true;
  std::map<std::string, double> per_param;
};

/// Builds the scalar loss on a fresh tape. The builder registers the
/// parameters it reads (Tape::parameter) from the same Matrix objects that
/// are handed to gradcheck, so perturbations are seen on the next build.
using LossBuilder = std::function<Var(Tape&)>;

/// Central finite differences (f(θ+h) - f(θ-h)) / 2h against backward() for
/// every entry of every listed parameter. Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-8). Parameters are restored
/// exactly after each probe.
GradcheckReport gradcheck(const LossBuilder& build,
                          const std::map<std::string, Matrix*>& params,
                          double h = 1e-5, double tol = 1e-5);

}  // namespace arcl::autodiff
