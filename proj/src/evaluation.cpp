#include "salient/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "salient/grad.hpp"
#include "salient/ops.hpp"

namespace salient {
namespace {

double percent(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

// Binomial(n, 1/2) upper tail starting at c, summed term by term.
long double binomial_half_tail(std::uint64_t n, std::uint64_t c) {
  constexpr bool wide = std::numeric_limits<long double>::min_exponent < -16000;
  long double term = 0.0L;
  std::uint64_t k = 0;
  if (wide && n <= 16000) {
    term = std::ldexp(1.0L, -static_cast<int>(n));  // exact 2^-n
  } else {
    // Start directly at c in log space to avoid underflow.
    k = c;
    const auto nl = static_cast<long double>(n);
    const auto cl = static_cast<long double>(c);
    term = std::exp(std::lgamma(nl + 1) - std::lgamma(cl + 1) - std::lgamma(nl - cl + 1) -
                    nl * std::log(2.0L));
  }
  long double tail = 0.0L;
  for (; k <= n; ++k) {
    if (k >= c) tail += term;
    term = term * static_cast<long double>(n - k) / static_cast<long double>(k + 1);
  }
  return tail;
}

}  // namespace

double round1(double value) { return std::round(value * 10.0) / 10.0; }

double f1_score(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

MetricsReport classification_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size() || labels.empty()) {
    throw std::invalid_argument("classification_metrics: need equal, nonempty prediction and label lists");
  }
  MetricsReport r;
  auto& c = r.counts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = predictions[i] == 1;
    const bool gold = labels[i] == 1;
    if (pred && gold) ++c.tp;
    else if (pred) ++c.fp;
    else if (gold) ++c.fn;
    else ++c.tn;
  }
  r.precision = percent(c.tp, c.tp + c.fp);
  r.recall = percent(c.tp, c.tp + c.fn);
  r.f1_undefined = r.precision + r.recall == 0.0;
  r.f1 = f1_score(r.precision, r.recall);
  r.accuracy = percent(c.tp + c.tn, labels.size());
  return r;
}

std::optional<double> saliency_accuracy(std::span<const double> G, std::span<const std::uint8_t> Z) {
  SaliencyTally tally;
  tally.add(G, Z);
  return tally.percent();
}

void SaliencyTally::add(std::span<const double> G, std::span<const std::uint8_t> Z) {
  if (G.size() != Z.size()) {
    throw std::invalid_argument("saliency_accuracy: " + std::to_string(G.size()) +
                                " gradients for " + std::to_string(Z.size()) + " marks");
  }
  for (std::size_t i = 0; i < Z.size(); ++i) {
    if (!Z[i]) continue;
    ++marked;
    if (G[i] > 0.0) ++positive;
  }
}

std::optional<double> SaliencyTally::percent() const {
  if (marked == 0) return std::nullopt;
  return salient::percent(positive, marked);
}

double mcnemar_one_sided(std::uint64_t b, std::uint64_t c) {
  if (b + c == 0) throw std::invalid_argument("mcnemar_one_sided: requires b + c >= 1");
  if (c == 0) return 1.0;
  return std::min(1.0, static_cast<double>(binomial_half_tail(b + c, c)));
}

McNemarResult compare_predictions(std::span<const int> labels, std::span<const int> baseline,
                                  std::span<const int> candidate) {
  if (labels.size() != baseline.size() || labels.size() != candidate.size()) {
    throw std::invalid_argument("compare_predictions: prediction lists differ in length");
  }
  McNemarResult r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool base_ok = baseline[i] == labels[i];
    const bool cand_ok = candidate[i] == labels[i];
    if (base_ok && !cand_ok) ++r.b;
    if (cand_ok && !base_ok) ++r.c;
  }
  r.defined = r.b + r.c > 0;
  if (r.defined) r.p_value = mcnemar_one_sided(r.b, r.c);
  return r;
}

VerificationReport tpr_drop(double tpr0, double tpr1) {
  VerificationReport r;
  r.tpr0 = tpr0;
  r.tpr1 = tpr1;
  r.delta_defined = tpr0 > 0.0;
  r.delta_tpr = r.delta_defined ? 100.0 * (tpr0 - tpr1) / tpr0 : 0.0;
  return r;
}

std::vector<Prediction> predict_all(const ModelParams& params, const ModelConfig& config,
                                    std::span<const Example> examples) {
  NoGradGuard no_grad;
  std::vector<Prediction> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(predict(encode(ex, params, config).logit.item()));
  return out;
}

VerificationReport verify_tpr_drop(const ModelParams& params, const ModelConfig& config,
                                   std::span<const Example> positives, RemovalMode mode) {
  std::vector<Example> stripped;
  stripped.reserve(positives.size());
  for (const auto& ex : positives) stripped.push_back(remove_marked(ex, mode));

  auto hits = [&](std::span<const Example> set) {
    std::size_t tp = 0;
    for (const auto& p : predict_all(params, config, set)) tp += p.label == 1 ? 1 : 0;
    return tp;
  };
  auto r = tpr_drop(percent(hits(positives), positives.size()),
                    percent(hits(stripped), stripped.size()));
  r.positives = positives.size();
  return r;
}

SaliencyReport saliency_report(const Example& example, const ModelParams& params,
                               const ModelConfig& config, const Vocabulary* vocab,
                               std::span<const Level> levels) {
  auto trace = encode(example, params, config);
  std::vector<Tensor> targets;
  for (auto level : levels) targets.push_back(level_tensor(trace, level));
  auto grads = backward({trace.logit, targets, false});

  const auto length = std::min(example.tokens.size(), config.max_len);
  SaliencyReport report;
  report.logit = trace.logit.item();
  report.rationale.assign(example.rationale.begin(),
                          example.rationale.begin() + static_cast<std::ptrdiff_t>(length));
  for (std::size_t i = 0; i < length; ++i) {
    report.tokens.push_back(vocab ? vocab->token(example.tokens[i])
                                  : std::to_string(example.tokens[i]));
  }
  for (std::size_t k = 0; k < levels.size(); ++k) {
    auto G = grads[k].rank() == 2 ? sum_axis(grads[k], 1) : grads[k];
    auto v = G.values();
    report.G[levels[k]] = std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(length));
  }
  return report;
}

std::vector<SalientToken> top_k_salient(const SaliencyReport& report, std::size_t k) {
  if (k == 0) throw std::invalid_argument("top_k_salient: k must be >= 1");
  auto it = report.G.find(Level::word);
  if (it == report.G.end()) throw std::invalid_argument("top_k_salient: no word-level saliency");
  const auto& G = it->second;

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < G.size(); ++i) {
    if (G[i] != 0.0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&G](std::size_t a, std::size_t b) { return std::abs(G[a]) > std::abs(G[b]); });
  if (order.size() > k) order.resize(k);

  std::vector<SalientToken> out;
  if (order.empty()) return out;
  const double top = std::abs(G[order.front()]);
  for (auto i : order) out.push_back({i, G[i], std::abs(G[i]) / top});
  return out;
}

MetricsReport evaluate(const ModelParams& params, const ModelConfig& config,
                       std::span<const Example> examples, bool with_saliency) {
  std::vector<int> preds, labels;
  for (const auto& p : predict_all(params, config, examples)) preds.push_back(p.label);
  for (const auto& ex : examples) labels.push_back(ex.label);
  auto report = classification_metrics(preds, labels);
  if (!with_saliency) return report;

  std::map<Level, SaliencyTally> tallies;
  for (const auto& ex : examples) {
    if (ex.marked_count() == 0) continue;
    auto sr = saliency_report(ex, params, config);
    for (auto level : kAllLevels) tallies[level].add(sr.G.at(level), sr.rationale);
  }
  for (auto level : kAllLevels) report.saliency_accuracy[level] = tallies[level].percent();
  return report;
}

std::string to_record(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["tp"] = r.counts.tp;
  j["fp"] = r.counts.fp;
  j["tn"] = r.counts.tn;
  j["fn"] = r.counts.fn;
  j["precision"] = round1(r.precision);
  j["recall"] = round1(r.recall);
  j["f1"] = round1(r.f1);
  j["accuracy"] = round1(r.accuracy);
  j["f1_undefined"] = r.f1_undefined;
  for (const auto& [level, value] : r.saliency_accuracy) {
    auto key = "s_acc_" + std::string(to_string(level));
    if (value) j[key] = round1(*value);
    else j[key] = nullptr;
  }
  return j.dump();
}

std::string to_record(const VerificationReport& r) {
  nlohmann::ordered_json j;
  j["positives"] = r.positives;
  j["tpr0"] = round1(r.tpr0);
  j["tpr1"] = round1(r.tpr1);
  if (r.delta_defined) j["delta_tpr"] = round1(r.delta_tpr);
  else j["delta_tpr"] = nullptr;
  return j.dump();
}

std::string to_record(const McNemarResult& r) {
  nlohmann::ordered_json j;
  j["b"] = r.b;
  j["c"] = r.c;
  if (r.defined) j["p_value"] = r.p_value;
  else j["p_value"] = nullptr;
  return j.dump();
}

}  // namespace salient
