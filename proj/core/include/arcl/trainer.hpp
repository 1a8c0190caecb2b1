// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "arcl/arc.hpp"
#include "arcl/errors.hpp"
#include "arcl/rng.hpp"
#include "arcl/vit.hpp"

namespace arcl {

enum class Schedule { cosine, constant };

std::string_view to_string(Schedule s);
Schedule parse_schedule(std::string_view name);

/// Optimizer and loop settings. The optimizer is always AdamW with
/// beta1 = 0.9, beta2 = 0.999, eps = 1e-8 and decoupled weight decay.
/// Adapter dropout is a property of the bank (ArcConfig::dropout_rate).
struct TrainConfig {
  double lr = 1e-2;
  double weight_decay = 0.0;
  int batch_size = 8;
  int epochs = 125;
  int warmup_epochs = 10;
  Schedule schedule = Schedule::cosine;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless 0 <= lr < inf, weight_decay >= 0, batch_size >= 1,
  /// epochs >= 1 and 0 <= warmup_epochs <= epochs.
  void validate() const;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Class-conditional Gaussian images. Class k has mean
/// background * B + contrast * P_k with B, P_k ~ N(0, 1) per pixel; a sample
/// is its class mean plus noise * N(0, 1). Labels are assigned round-robin
/// (sample i has label i mod classes), so classes are balanced.
struct TaskSpec {
  int classes = 4;
  double noise = 0.0;
  double contrast = 1.0;
  double background = 0.0;
  int train_samples = 32;
  int eval_samples = 32;

  void validate() const;
};

struct Dataset {
  std::vector<Image> class_means;
  std::vector<Image> train_images;
  std::vector<int> train_labels;
  std::vector<Image> eval_images;
  std::vector<int> eval_labels;
};

/// Deterministic in (spec, image shape, rng state). The class count must match
/// backbone.classes.
Dataset make_task(const TaskSpec& spec, const BackboneConfig& backbone, Rng& rng);

/// Learning rate at 0-based step t of `total`: linear warmup lr * t / W over
/// the first W steps, then lr * 0.5 * (1 + cos(pi * (t - W) / (total - W)))
/// for cosine, or lr for constant.
double learning_rate(const TrainConfig& cfg, long step, long warmup_steps, long total_steps);

struct StepRecord {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;  // on the step's mini-batch, before the update
};

struct TrainResult {
  std::vector<StepRecord> curve;
  std::string checksum_before;
  std::string checksum_after;
  double train_accuracy = 0.0;  // eval mode, after the last step
};

/// Loss was non-finite. Carries the step, learning rate and the largest
/// absolute gradient entry at the failure.
class NumericalAbort : public NumericalError {
 public:
  NumericalAbort(long step, double lr, double max_grad);
  long step() const noexcept { return step_; }
  double lr() const noexcept { return lr_; }
  double max_grad() const noexcept { return max_grad_; }

 private:
  long step_;
  double lr_;
  double max_grad_;
};

/// Fine-tunes every tensor of `bank` plus the classification head with
/// AdamW on mean cross-entropy, one epoch = ceil(n / batch) steps over a
/// fresh shuffle. A null bank trains the head alone (linear probe). All
/// non-head backbone tensors stay bit-identical; the function verifies this
/// by checksum and throws ContractError otherwise. The bank is left in eval
/// mode.
TrainResult train(BackboneWeights& weights, AdapterBank* bank, const Dataset& data,
                  const TrainConfig& cfg);

/// Fraction of images whose argmax logit matches the label (eval mode).
double accuracy(const BackboneWeights& weights, const AdapterBank* bank,
                const std::vector<Image>& images, const std::vector<int>& labels);

/// Columns step,lr,loss,accuracy.
void write_loss_csv(const std::vector<StepRecord>& curve, std::ostream& out);

}  // namespace arcl
