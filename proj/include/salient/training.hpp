#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "salient/data.hpp"
#include "salient/evaluation.hpp"
#include "salient/loss.hpp"
#include "salient/model.hpp"

namespace salient {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  static AdamState zeros(std::span<const Tensor> params);
};

// One bias-corrected Adam update, in place on the parameter values. Throws
// NumericalError naming the first gradient tensor holding a NaN or Inf.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& cfg, std::span<const std::string> names = {});

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  double dropout = 0.5;
  std::size_t epochs = 10;
  std::size_t patience = 5;  // epochs without dev F1 improvement; 0 disables
  std::uint64_t seed = 0;
  SaliencyConfig saliency;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double task_loss = 0.0; // mean over examples
  double penalty = 0.0;   // mean over examples
  MetricsReport dev;
  double seconds = 0.0;   // wall clock; excluded from the serialized log
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;

  // Newline-delimited JSON, one record per epoch. Deterministic.
  std::string to_jsonl() const;
};

struct TrainResult {
  ModelParams params;  // parameters of the epoch with the best dev F1
  TrainLog log;
};

// Mini-batch Adam on the mean per-example total cost. Dropout masks are drawn
// fresh per example; the saliency terms share the task loss's forward pass.
TrainResult train(const ModelConfig& config, const ModelParams& init,
                  std::span<const Example> train_set, std::span<const Example> dev_set,
                  const TrainConfig& cfg);

struct BatchGradient {
  std::vector<Tensor> grads;  // mean over the batch, in ModelParams::tensors() order
  double task_loss_sum = 0.0;
  double penalty_sum = 0.0;
};

// Examples are processed in order and their gradients summed in that order.
BatchGradient batch_gradient(const ModelConfig& config, const ModelParams& params,
                             std::span<const Example* const> batch, const SaliencyConfig& saliency,
                             DropoutSpec dropout);

}  // namespace salient
