#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "salient/data.hpp"
#include "salient/loss.hpp"
#include "salient/model.hpp"

namespace salient {

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  bool operator==(const Confusion&) const = default;
};

// Percentages in [0, 100].
struct MetricsReport {
  Confusion counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  bool f1_undefined = false;  // precision + recall == 0; f1 reported as 0
  // Absent for a level when no evaluated example had a marked token.
  std::map<Level, std::optional<double>> saliency_accuracy;
};

// Harmonic mean of two percentages; 0 when both are 0.
double f1_score(double precision, double recall);

MetricsReport classification_metrics(std::span<const int> predictions, std::span<const int> labels);

// 100 * #{i : Z_i = 1 and G_i > 0} / #{i : Z_i = 1}. Strict: G_i == 0 fails.
// nullopt when nothing is marked (the example is skipped).
std::optional<double> saliency_accuracy(std::span<const double> G, std::span<const std::uint8_t> Z);

// Micro-averaged saliency accuracy across examples.
struct SaliencyTally {
  std::size_t positive = 0;
  std::size_t marked = 0;

  void add(std::span<const double> G, std::span<const std::uint8_t> Z);
  std::optional<double> percent() const;
};

// Exact one-sided McNemar test. b counts pairs only model A (baseline) got
// right, c pairs only model B got right; returns P[X >= c] for
// X ~ Binomial(b + c, 1/2). Requires b + c >= 1.
double mcnemar_one_sided(std::uint64_t b, std::uint64_t c);

struct McNemarResult {
  std::uint64_t b = 0;  // baseline right, candidate wrong
  std::uint64_t c = 0;  // candidate right, baseline wrong
  double p_value = 1.0;
  bool defined = false; // false when b + c == 0
};

McNemarResult compare_predictions(std::span<const int> labels, std::span<const int> baseline,
                                  std::span<const int> candidate);

struct VerificationReport {
  std::size_t positives = 0;
  double tpr0 = 0.0;       // percent, before removal
  double tpr1 = 0.0;       // percent, after removal
  double delta_tpr = 0.0;  // 100 * (tpr0 - tpr1) / tpr0
  bool delta_defined = true;
};

// Relative TPR drop from two rates (in percent).
VerificationReport tpr_drop(double tpr0, double tpr1);

std::vector<Prediction> predict_all(const ModelParams& params, const ModelConfig& config,
                                    std::span<const Example> examples);

// TPR on the positives before and after remove_marked.
VerificationReport verify_tpr_drop(const ModelParams& params, const ModelConfig& config,
                                   std::span<const Example> positives,
                                   RemovalMode mode = RemovalMode::remove);

// Per-token saliency of one example (inference mode), pad positions dropped.
struct SaliencyReport {
  std::vector<std::string> tokens;
  std::vector<std::uint8_t> rationale;
  std::map<Level, std::vector<double>> G;
  double logit = 0.0;
};

SaliencyReport saliency_report(const Example& example, const ModelParams& params,
                               const ModelConfig& config, const Vocabulary* vocab = nullptr,
                               std::span<const Level> levels = kAllLevels);

struct SalientToken {
  std::size_t index = 0;
  double saliency = 0.0;  // word-level G
  double weight = 0.0;    // |G| / max |G|, in (0, 1]
};

// The k word-level positions with the largest |G|, ties to the lower index.
// Positions with G == 0 are never returned.
std::vector<SalientToken> top_k_salient(const SaliencyReport& report, std::size_t k = 6);

// Classification metrics plus (optionally) micro s_acc at every level.
MetricsReport evaluate(const ModelParams& params, const ModelConfig& config,
                       std::span<const Example> examples, bool with_saliency = true);

// One-line JSON records; percentages rounded to one decimal.
std::string to_record(const MetricsReport& report);
std::string to_record(const VerificationReport& report);
std::string to_record(const McNemarResult& result);

double round1(double value);

}  // namespace salient
