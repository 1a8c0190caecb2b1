// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "arcl/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "arcl/errors.hpp"
#include "arcl/kernel.hpp"

namespace arcl::autodiff {

namespace k = arcl::kernel;

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) {
    throw ContractError("tape: Var " + (v.id == Var::kNone ? std::string("<none>")
                                                           : std::to_string(v.id)) +
                        " was not recorded on this tape");
  }
  return nodes_[v.id];
}

Var Tape::push(Node n) {
  for (auto in : n.inputs) {
    n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(std::string name, const Matrix& value, bool trainable) {
  for (const auto& p : params_) {
    if (p.name == name) throw ContractError("tape: parameter '" + name + "' registered twice");
  }
  Node n;
  n.value = value;
  n.param = static_cast<int>(params_.size());
  n.needs_grad = trainable;
  Var v = push(std::move(n));
  params_.push_back({std::move(name), trainable, v.id});
  bound_[&value] = v;
  return v;
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(const Matrix& value) {
  if (auto it = bound_.find(&value); it != bound_.end()) return it->second;
  Var v = constant(value);
  bound_[&value] = v;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  Node n;
  n.op = Op::matmul;
  n.value = k::matmul(node(a).value, node(b).value);
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  Node n;
  if (av.same_shape(bv)) {
    n.op = Op::add;
    n.value = k::add(av, bv);
  } else {
    n.op = Op::add_row;
    n.value = k::add_row(av, bv);
  }
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::scale;
  n.value = k::scale(node(a).value, s);
  n.attr = s;
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::layernorm(Var x, Var gamma, Var beta, double eps) {
  const auto& xv = node(x).value;
  const auto& g = node(gamma).value;
  const auto& b = node(beta).value;
  Node n;
  n.op = Op::layernorm;
  n.value = k::layernorm(xv, g.data(), b.data(), eps);
  n.saved = Matrix(xv.rows(), xv.cols());
  n.saved_rows.resize(xv.rows());
  const double width = static_cast<double>(xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    auto in = xv.row_span(i);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= width;
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= width;
    const double rstd = 1.0 / std::sqrt(var + eps);
    n.saved_rows[i] = rstd;
    for (std::size_t j = 0; j < in.size(); ++j) n.saved(i, j) = (in[j] - mean) * rstd;
  }
  n.inputs = {x.id, gamma.id, beta.id};
  return push(std::move(n));
}

Var Tape::softmax_rows(Var a) {
  Node n;
  n.op = Op::softmax_rows;
  n.value = k::softmax_rows(node(a).value);
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::gelu(Var a) {
  Node n;
  n.op = Op::gelu;
  n.value = k::gelu(node(a).value);
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::transpose(Var a) {
  Node n;
  n.op = Op::transpose;
  n.value = k::transpose(node(a).value);
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::concat_rows(std::span<const Var> parts) {
  std::vector<Matrix> values;
  Node n;
  n.op = Op::concat_rows;
  for (auto p : parts) {
    values.push_back(node(p).value);
    n.inputs.push_back(p.id);
  }
  n.value = k::concat_rows(values);
  return push(std::move(n));
}

Var Tape::concat_cols(std::span<const Var> parts) {
  std::vector<Matrix> values;
  Node n;
  n.op = Op::concat_cols;
  for (auto p : parts) {
    values.push_back(node(p).value);
    n.inputs.push_back(p.id);
  }
  n.value = k::concat_cols(values);
  return push(std::move(n));
}

Var Tape::slice_rows(Var a, std::size_t start, std::size_t count) {
  Node n;
  n.op = Op::slice_rows;
  n.value = k::slice_rows(node(a).value, start, count);
  n.start = start;
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t count) {
  Node n;
  n.op = Op::slice_cols;
  n.value = k::slice_cols(node(a).value, start, count);
  n.start = start;
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::scale_cols(Var a, Var c) {
  const auto& cv = node(c).value;
  if (cv.rows() != 1) {
    throw DimensionError("scale_cols: scale must be a row, got " + cv.shape_string());
  }
  Node n;
  n.op = Op::scale_cols;
  n.value = k::scale_cols(node(a).value, cv.data());
  n.inputs = {a.id, c.id};
  return push(std::move(n));
}

Var Tape::dropout(Var a, double rate, Rng& rng) {
  const auto& av = node(a).value;
  Node n;
  n.op = Op::dropout;
  n.saved = k::dropout_mask(av.rows(), av.cols(), rate, rng);
  n.value = k::hadamard(av, n.saved);
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  const auto& av = node(a).value;
  Node n;
  n.op = Op::mean;
  n.value = Matrix(1, 1, k::sum(av) / static_cast<double>(av.size()));
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::sum;
  n.value = Matrix(1, 1, k::sum(node(a).value));
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::cross_entropy(Var logits, std::span<const int> labels) {
  const auto& z = node(logits).value;
  Node n;
  n.op = Op::cross_entropy;
  n.value = Matrix(1, 1, k::cross_entropy(z, labels));
  n.saved = k::softmax_rows(z);
  n.labels.assign(labels.begin(), labels.end());
  n.inputs = {logits.id};
  return push(std::move(n));
}

Var Tape::apply(std::string_view primitive, std::span<const Var> inputs) {
  auto arity = [&](std::size_t want) {
    if (inputs.size() != want) {
      throw ContractError("tape: primitive '" + std::string(primitive) + "' takes " +
                          std::to_string(want) + " inputs, got " +
                          std::to_string(inputs.size()));
    }
  };
  using Binary = Var (Tape::*)(Var, Var);
  using Unary = Var (Tape::*)(Var);
  static const std::map<std::string_view, Binary> binary = {
      {"matmul", &Tape::matmul}, {"add", &Tape::add}, {"scale_cols", &Tape::scale_cols}};
  static const std::map<std::string_view, Unary> unary = {
      {"transpose", &Tape::transpose}, {"softmax_rows", &Tape::softmax_rows},
      {"gelu", &Tape::gelu},           {"mean", &Tape::mean},
      {"sum", &Tape::sum}};
  if (auto it = binary.find(primitive); it != binary.end()) {
    arity(2);
    return (this->*(it->second))(inputs[0], inputs[1]);
  }
  if (auto it = unary.find(primitive); it != unary.end()) {
    arity(1);
    return (this->*(it->second))(inputs[0]);
  }
  if (primitive == "concat_rows") return concat_rows(inputs);
  if (primitive == "concat_cols") return concat_cols(inputs);
  throw ContractError("tape: unregistered primitive '" + std::string(primitive) + "'");
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const auto& m = node(v).value;
  if (m.size() != 1) throw ContractError("tape: node is " + m.shape_string() + ", not scalar");
  return m[0];
}

Op Tape::op(Var v) const { return node(v).op; }

std::span<const std::size_t> Tape::inputs(Var v) const { return node(v).inputs; }

GradStore Tape::backward(Var output) {
  const auto& out = node(output);
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw ContractError("backward: output must be 1x1, got " + out.value.shape_string());
  }
  std::vector<Matrix> grads(nodes_.size());
  grads[output.id] = Matrix(1, 1, 1.0);
  last_visits_ = 0;

  auto accumulate = [&](std::size_t id, const Matrix& g) {
    if (!nodes_[id].needs_grad) return;
    if (grads[id].empty()) {
      grads[id] = g;
    } else {
      auto dst = grads[id].data();
      auto src = g.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  };

  for (std::size_t id = output.id + 1; id-- > 0;) {
    if (grads[id].empty()) continue;
    ++last_visits_;
    const Node& n = nodes_[id];
    const Matrix& g = grads[id];
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::matmul: {
        const auto& a = nodes_[n.inputs[0]].value;
        const auto& b = nodes_[n.inputs[1]].value;
        if (nodes_[n.inputs[0]].needs_grad) accumulate(n.inputs[0], k::matmul(g, k::transpose(b)));
        if (nodes_[n.inputs[1]].needs_grad) accumulate(n.inputs[1], k::matmul(k::transpose(a), g));
        break;
      }
      case Op::add:
        accumulate(n.inputs[0], g);
        accumulate(n.inputs[1], g);
        break;
      case Op::add_row:
        accumulate(n.inputs[0], g);
        if (nodes_[n.inputs[1]].needs_grad) accumulate(n.inputs[1], k::col_sums(g));
        break;
      case Op::scale:
        accumulate(n.inputs[0], k::scale(g, n.attr));
        break;
      case Op::layernorm: {
        const auto& gamma = nodes_[n.inputs[1]].value;
        const Matrix& xhat = n.saved;
        const std::size_t rows = xhat.rows();
        const std::size_t cols = xhat.cols();
        if (nodes_[n.inputs[0]].needs_grad) {
          Matrix dx(rows, cols);
          for (std::size_t i = 0; i < rows; ++i) {
            double mean_gy = 0.0;
            double mean_gy_xhat = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
              const double gy = g(i, j) * gamma[j];
              mean_gy += gy;
              mean_gy_xhat += gy * xhat(i, j);
            }
            mean_gy /= static_cast<double>(cols);
            mean_gy_xhat /= static_cast<double>(cols);
            for (std::size_t j = 0; j < cols; ++j) {
              const double gy = g(i, j) * gamma[j];
              dx(i, j) = n.saved_rows[i] * (gy - mean_gy - xhat(i, j) * mean_gy_xhat);
            }
          }
          accumulate(n.inputs[0], dx);
        }
        if (nodes_[n.inputs[1]].needs_grad) accumulate(n.inputs[1], k::col_sums(k::hadamard(g, xhat)));
        if (nodes_[n.inputs[2]].needs_grad) accumulate(n.inputs[2], k::col_sums(g));
        break;
      }
      case Op::softmax_rows: {
        const Matrix& y = n.value;
        Matrix dx(y.rows(), y.cols());
        for (std::size_t i = 0; i < y.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
          for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) = y(i, j) * (g(i, j) - dot);
        }
        accumulate(n.inputs[0], dx);
        break;
      }
      case Op::gelu: {
        const auto& x = nodes_[n.inputs[0]].value;
        Matrix dx(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = g[i] * k::gelu_grad(x[i]);
        accumulate(n.inputs[0], dx);
        break;
      }
      case Op::transpose:
        accumulate(n.inputs[0], k::transpose(g));
        break;
      case Op::concat_rows: {
        std::size_t offset = 0;
        for (auto in : n.inputs) {
          const std::size_t r = nodes_[in].value.rows();
          if (nodes_[in].needs_grad) accumulate(in, k::slice_rows(g, offset, r));
          offset += r;
        }
        break;
      }
      case Op::concat_cols: {
        std::size_t offset = 0;
        for (auto in : n.inputs) {
          const std::size_t c = nodes_[in].value.cols();
          if (nodes_[in].needs_grad) accumulate(in, k::slice_cols(g, offset, c));
          offset += c;
        }
        break;
      }
      case Op::slice_rows: {
        const auto& src = nodes_[n.inputs[0]].value;
        Matrix dx(src.rows(), src.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) dx(n.start + i, j) = g(i, j);
        accumulate(n.inputs[0], dx);
        break;
      }
      case Op::slice_cols: {
        const auto& src = nodes_[n.inputs[0]].value;
        Matrix dx(src.rows(), src.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) dx(i, n.start + j) = g(i, j);
        accumulate(n.inputs[0], dx);
        break;
      }
      case Op::scale_cols: {
        const auto& a = nodes_[n.inputs[0]].value;
        const auto& c = nodes_[n.inputs[1]].value;
        if (nodes_[n.inputs[0]].needs_grad) accumulate(n.inputs[0], k::scale_cols(g, c.data()));
        if (nodes_[n.inputs[1]].needs_grad) accumulate(n.inputs[1], k::col_sums(k::hadamard(g, a)));
        break;
      }
      case Op::dropout:
        accumulate(n.inputs[0], k::hadamard(g, n.saved));
        break;
      case Op::mean: {
        const auto& src = nodes_[n.inputs[0]].value;
        accumulate(n.inputs[0],
                   Matrix(src.rows(), src.cols(), g[0] / static_cast<double>(src.size())));
        break;
      }
      case Op::sum: {
        const auto& src = nodes_[n.inputs[0]].value;
        accumulate(n.inputs[0], Matrix(src.rows(), src.cols(), g[0]));
        break;
      }
      case Op::cross_entropy: {
        Matrix dz = n.saved;
        const double inv_batch = 1.0 / static_cast<double>(dz.rows());
        for (std::size_t i = 0; i < dz.rows(); ++i) {
          dz(i, static_cast<std::size_t>(n.labels[i])) -= 1.0;
          for (std::size_t j = 0; j < dz.cols(); ++j) dz(i, j) *= g[0] * inv_batch;
        }
        accumulate(n.inputs[0], dz);
        break;
      }
    }
  }

  GradStore store;
  for (const auto& p : params_) {
    if (p.trainable && p.node <= output.id && !grads[p.node].empty()) {
      store.emplace(p.name, std::move(grads[p.node]));
    }
  }
  return store;
}

GradcheckReport gradcheck(const LossBuilder& build,
                          const std::map<std::string, Matrix*>& params, double h,
                          double tol) {
  if (!(h > 0.0)) throw ContractError("gradcheck: step h must be positive");
  GradcheckReport report;
  report.tol = tol;

  GradStore analytic;
  {
    Tape tape;
    Var loss = build(tape);
    analytic = tape.backward(loss);
  }
  auto eval = [&] {
    Tape tape;
    return tape.scalar(build(tape));
  };

  for (const auto& [name, param] : params) {
    const auto it = analytic.find(name);
    double worst = 0.0;
    for (std::size_t i = 0; i < param->size(); ++i) {
      const double original = (*param)[i];
      (*param)[i] = original + h;
      const double f_plus = eval();
      (*param)[i] = original - h;
      const double f_minus = eval();
      (*param)[i] = original;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double exact = it == analytic.end() ? 0.0 : it->second[i];
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      const double rel = std::abs(exact - numeric) / denom;
      ++report.entries_checked;
      worst = std::max(worst, rel);
      if (rel > report.max_rel_error || report.entries_checked == 1) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
    report.per_param[name] = worst;
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace arcl::autodiff
