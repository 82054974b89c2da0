#include "salient/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "salient/errors.hpp"
#include "salient/grad.hpp"

namespace salient {

AdamState AdamState::zeros(std::span<const Tensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.size(), 0.0);
    s.second_moment.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& cfg, std::span<const std::string> names) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].shape() != grads[k].shape()) {
      throw std::invalid_argument("adam_step: gradient shape " + to_string(grads[k].shape()) +
                                  " does not match parameter " + to_string(params[k].shape()));
    }
    for (double g : grads[k].values()) {
      if (!std::isfinite(g)) {
        throw NumericalError("adam_step: non-finite gradient in " +
                             (k < names.size() ? names[k] : "tensor " + std::to_string(k)));
      }
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].mutable_values();
    auto g = grads[k].values();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

void TrainConfig::validate() const {
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("train: dropout must lie in [0, 1)");
  if (batch_size == 0) throw std::invalid_argument("train: batch size must be >= 1");
  saliency.validate();
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["task_loss"] = e.task_loss;
    j["penalty"] = e.penalty;
    j["dev_precision"] = round1(e.dev.precision);
    j["dev_recall"] = round1(e.dev.recall);
    j["dev_f1"] = round1(e.dev.f1);
    j["dev_accuracy"] = round1(e.dev.accuracy);
    j["best"] = e.epoch == best_epoch;
    out += j.dump();
    out += '\n';
  }
  return out;
}

BatchGradient batch_gradient(const ModelConfig& config, const ModelParams& params,
                             std::span<const Example* const> batch, const SaliencyConfig& saliency,
                             DropoutSpec dropout) {
  auto leaves = params.tensors();
  BatchGradient out;
  std::vector<std::vector<double>> sums;
  for (const auto& p : leaves) sums.emplace_back(p.size(), 0.0);

  for (const Example* ex : batch) {
    auto trace = encode(*ex, params, config, dropout);
    auto terms = total_cost(trace, *ex, saliency);
    out.task_loss_sum += terms.task.item();
    out.penalty_sum += terms.penalty.item();
    auto grads = backward({terms.total, leaves, false});
    for (std::size_t k = 0; k < grads.size(); ++k) {
      auto g = grads[k].values();
      auto& s = sums[k];
      for (std::size_t i = 0; i < g.size(); ++i) s[i] += g[i];
    }
  }
  const double inv = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    for (auto& v : sums[k]) v *= inv;
    out.grads.push_back(Tensor::constant(leaves[k].shape(), std::move(sums[k])));
  }
  return out;
}

TrainResult train(const ModelConfig& config, const ModelParams& init,
                  std::span<const Example> train_set, std::span<const Example> dev_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (dev_set.empty()) throw std::invalid_argument("train: empty dev set");

  auto params = init.clone();
  auto leaves = params.tensors();
  std::vector<std::string> names;
  for (const auto& [name, t] : params.named()) names.push_back(name);
  auto state = AdamState::zeros(leaves);

  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  DropoutSpec dropout{cfg.dropout, cfg.dropout > 0.0 ? &dropout_rng : nullptr};

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.params = params.clone();
  double best_f1 = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double task_sum = 0.0;
    double penalty_sum = 0.0;

    for (std::size_t begin = 0, batch_no = 0; begin < order.size(); begin += cfg.batch_size, ++batch_no) {
      const auto end = std::min(order.size(), begin + cfg.batch_size);
      std::vector<const Example*> batch;
      for (auto i = begin; i < end; ++i) batch.push_back(&train_set[order[i]]);

      auto bg = batch_gradient(config, params, batch, cfg.saliency, dropout);
      if (!std::isfinite(bg.task_loss_sum) || !std::isfinite(bg.penalty_sum)) {
        throw NumericalError("train: non-finite cost at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_no));
      }
      task_sum += bg.task_loss_sum;
      penalty_sum += bg.penalty_sum;
      adam_step(leaves, bg.grads, state, cfg.adam, names);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.task_loss = task_sum / static_cast<double>(train_set.size());
    record.penalty = penalty_sum / static_cast<double>(train_set.size());
    record.dev = evaluate(params, config, dev_set, /*with_saliency=*/false);
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.epochs.push_back(record);

    if (record.dev.f1 > best_f1) {
      best_f1 = record.dev.f1;
      result.log.best_epoch = epoch;
      result.params = params.clone();
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

}  // namespace salient
