// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "arcl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>

#include "arcl/autodiff.hpp"
#include "arcl/kernel.hpp"

namespace arcl {

std::string_view to_string(Schedule s) { return s == Schedule::cosine ? "cosine" : "constant"; }

Schedule parse_schedule(std::string_view name) {
  if (name == "cosine") return Schedule::cosine;
  if (name == "constant") return Schedule::constant;
  throw ConfigError("unknown schedule '" + std::string(name) +
                    "' (expected one of: cosine, constant)");
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be finite and non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (warmup_epochs < 0 || warmup_epochs > epochs) {
    throw ConfigError("train.warmup_epochs must lie in 0..train.epochs");
  }
}

void TaskSpec::validate() const {
  if (classes < 2) throw ConfigError("task.classes must be at least 2");
  if (!(noise >= 0.0)) throw ConfigError("task.noise must be non-negative");
  if (!(contrast > 0.0)) throw ConfigError("task.contrast must be positive");
  if (!(background >= 0.0)) throw ConfigError("task.background must be non-negative");
  if (train_samples < 1) throw ConfigError("task.train_samples must be at least 1");
  if (eval_samples < 0) throw ConfigError("task.eval_samples must be non-negative");
}

Dataset make_task(const TaskSpec& spec, const BackboneConfig& backbone, Rng& rng) {
  spec.validate();
  backbone.validate();
  if (spec.classes != backbone.classes) {
    throw ConfigError("task.classes (" + std::to_string(spec.classes) +
                      ") differs from backbone.classes (" + std::to_string(backbone.classes) +
                      ")");
  }
  Dataset data;
  const Image shared = random_image(backbone, rng);
  for (int k = 0; k < spec.classes; ++k) {
    Image m = random_image(backbone, rng);
    for (std::size_t i = 0; i < m.pixels.size(); ++i) {
      m.pixels[i] = spec.background * shared.pixels[i] + spec.contrast * m.pixels[i];
    }
    data.class_means.push_back(std::move(m));
  }
  auto draw = [&](int n, std::vector<Image>& images, std::vector<int>& labels) {
    for (int i = 0; i < n; ++i) {
      const int label = i % spec.classes;
      Image img = data.class_means[static_cast<std::size_t>(label)];
      if (spec.noise > 0.0) {
        for (auto& p : img.pixels) p += spec.noise * rng.normal();
      }
      images.push_back(std::move(img));
      labels.push_back(label);
    }
  };
  draw(spec.train_samples, data.train_images, data.train_labels);
  draw(spec.eval_samples, data.eval_images, data.eval_labels);
  return data;
}

double learning_rate(const TrainConfig& cfg, long step, long warmup_steps, long total_steps) {
  if (step < warmup_steps) {
    return cfg.lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (cfg.schedule == Schedule::constant || total_steps <= warmup_steps) return cfg.lr;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

NumericalAbort::NumericalAbort(long step, double lr, double max_grad)
    : NumericalError("non-finite loss at step " + std::to_string(step) + " (lr " +
                         std::to_string(lr) + ", max |grad| " + std::to_string(max_grad) + ")",
                     max_grad),
      step_(step),
      lr_(lr),
      max_grad_(max_grad) {}

namespace {

struct AdamSlot {
  Matrix m;
  Matrix v;
};

std::size_t argmax_row(const Matrix& logits, std::size_t r) {
  const auto row = logits.row_span(r);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

double batch_accuracy(const Matrix& logits, std::span<const int> labels) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (argmax_row(logits, r) == static_cast<std::size_t>(labels[r])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

}  // namespace

double accuracy(const BackboneWeights& weights, const AdapterBank* bank,
                const std::vector<Image>& images, const std::vector<int>& labels) {
  if (images.size() != labels.size()) throw ContractError("accuracy: images/labels size mismatch");
  if (images.empty()) return 0.0;
  const Matrix logits = vit::forward_batch(images, weights, bank, Mode::eval);
  return batch_accuracy(logits, labels);
}

TrainResult train(BackboneWeights& weights, AdapterBank* bank, const Dataset& data,
                  const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = data.train_images.size();
  if (n == 0 || data.train_labels.size() != n) {
    throw ContractError("train: empty or inconsistent training set");
  }
  for (int label : data.train_labels) {
    if (label < 0 || label >= weights.config.classes) {
      throw ContractError("train: label " + std::to_string(label) + " outside 0.." +
                          std::to_string(weights.config.classes - 1));
    }
  }

  TrainResult result;
  result.checksum_before = frozen_checksum(weights);

  // Trainables in a fixed order: bank tensors (sorted by name), then head.
  std::vector<std::pair<std::string, Matrix*>> params;
  if (bank != nullptr) {
    for (auto& [name, m] : bank->tensors()) params.emplace_back(name, &m);
  }
  params.emplace_back("head.w", &weights.head_w);
  params.emplace_back("head.b", &weights.head_b);
  std::map<std::string, AdamSlot> slots;
  for (const auto& [name, m] : params) {
    slots.emplace(name, AdamSlot{Matrix(m->rows(), m->cols()), Matrix(m->rows(), m->cols())});
  }

  const Rng root(cfg.seed);
  Rng shuffle_rng = root.fork(1);
  Rng dropout_rng = root.fork(2);

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const long steps_per_epoch = static_cast<long>((n + batch - 1) / batch);
  const long total = steps_per_epoch * cfg.epochs;
  const long warmup = steps_per_epoch * cfg.warmup_epochs;

  if (bank != nullptr) bank->set_mode(Mode::train);
  std::vector<std::size_t> order(n);
  long step = 0;
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;
  try {
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.below(i))]);
      }
      for (std::size_t start = 0; start < n; start += batch, ++step) {
        const std::size_t count = std::min(batch, n - start);
        std::vector<Image> images;
        std::vector<int> labels;
        images.reserve(count);
        labels.reserve(count);
        for (std::size_t j = start; j < start + count; ++j) {
          images.push_back(data.train_images[order[j]]);
          labels.push_back(data.train_labels[order[j]]);
        }

        autodiff::Tape tape;
        for (const auto& [name, m] : params) tape.parameter(name, *m, true);
        const autodiff::Var logits = vit::forward_batch(
            tape, images, weights, bank, bank != nullptr ? Mode::train : Mode::eval,
            &dropout_rng);
        const autodiff::Var loss = tape.cross_entropy(logits, labels);
        const double lr_t = learning_rate(cfg, step, warmup, total);
        const autodiff::GradStore grads = tape.backward(loss);

        double max_grad = 0.0;
        for (const auto& [name, g] : grads) {
          for (double x : g.data()) {
            if (!std::isfinite(x) || std::abs(x) > max_grad) max_grad = std::abs(x);
          }
        }
        const double loss_value = tape.scalar(loss);
        if (!std::isfinite(loss_value)) throw NumericalAbort(step, lr_t, max_grad);
        result.curve.push_back({step, lr_t, loss_value, batch_accuracy(tape.value(logits), labels)});

        beta1_pow *= kAdamBeta1;
        beta2_pow *= kAdamBeta2;
        for (const auto& [name, m] : params) {
          auto it = grads.find(name);
          AdamSlot& slot = slots.at(name);
          auto theta = m->data();
          auto mm = slot.m.data();
          auto vv = slot.v.data();
          for (std::size_t k = 0; k < theta.size(); ++k) {
            const double g = it != grads.end() ? it->second.data()[k] : 0.0;
            mm[k] = kAdamBeta1 * mm[k] + (1.0 - kAdamBeta1) * g;
            vv[k] = kAdamBeta2 * vv[k] + (1.0 - kAdamBeta2) * g * g;
            const double m_hat = mm[k] / (1.0 - beta1_pow);
            const double v_hat = vv[k] / (1.0 - beta2_pow);
            theta[k] *= 1.0 - lr_t * cfg.weight_decay;
            theta[k] -= lr_t * m_hat / (std::sqrt(v_hat) + kAdamEps);
          }
        }
      }
    }
  } catch (...) {
    if (bank != nullptr) bank->set_mode(Mode::eval);
    throw;
  }
  if (bank != nullptr) bank->set_mode(Mode::eval);

  result.checksum_after = frozen_checksum(weights);
  if (result.checksum_after != result.checksum_before) {
    throw ContractError("train: frozen backbone tensors changed");
  }
  result.train_accuracy = accuracy(weights, bank, data.train_images, data.train_labels);
  return result;
}

void write_loss_csv(const std::vector<StepRecord>& curve, std::ostream& out) {
  out << "step,lr,loss,accuracy\n" << std::setprecision(17);
  for (const auto& r : curve) {
    out << r.step << ',' << r.lr << ',' << r.loss << ',' << r.accuracy << '\n';
  }
}

}  // namespace arcl
