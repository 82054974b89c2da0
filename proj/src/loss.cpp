#include "salient/loss.hpp"

#include <algorithm>
#include <stdexcept>

#include "salient/grad.hpp"
#include "salient/ops.hpp"

namespace salient {

std::vector<std::uint8_t> padded_mask(std::span<const std::uint8_t> rationale, std::size_t length) {
  std::vector<std::uint8_t> out(length, 0);
  std::copy_n(rationale.begin(), std::min(rationale.size(), length), out.begin());
  return out;
}

std::string_view to_string(Level level) {
  switch (level) {
    case Level::word:
      return "word";
    case Level::intermediate:
      return "intermediate";
    case Level::decision:
      return "decision";
  }
  return "?";
}

Level parse_level(std::string_view text) {
  for (auto level : kAllLevels) {
    if (to_string(level) == text) return level;
  }
  throw std::invalid_argument("unknown saliency level '" + std::string(text) +
                              "' (expected word, intermediate or decision)");
}

std::vector<Level> parse_levels(std::string_view text) {
  std::vector<Level> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    auto item = text.substr(pos, end - pos);
    if (!item.empty()) {
      auto level = parse_level(item);
      if (std::find(out.begin(), out.end(), level) == out.end()) out.push_back(level);
    }
    pos = end + 1;
  }
  return out;
}

void SaliencyConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("saliency: lambda must be >= 0");
  if (lambda > 0.0 && levels.empty()) {
    throw std::invalid_argument("saliency: at least one level is required when lambda > 0");
  }
}

const Tensor& level_tensor(const ForwardTrace& trace, Level level) {
  switch (level) {
    case Level::word:
      return trace.W;
    case Level::intermediate:
      return trace.I;
    case Level::decision:
      return trace.D_dim;
  }
  throw std::logic_error("level_tensor: bad level");
}

Tensor task_loss(const Tensor& logit, int label) {
  return softplus(label == 1 ? scale(logit, -1.0) : logit);
}

Tensor token_saliency(const Tensor& level, const Tensor& logit, bool create_graph) {
  auto g = grad(logit, level, create_graph);
  if (g.rank() == 1) return g;
  if (g.rank() != 2) {
    throw std::invalid_argument("token_saliency: level must be 1-D or 2-D, got " +
                                to_string(g.shape()));
  }
  return sum_axis(g, 1);
}

Tensor hinge_penalty(const Tensor& G, std::span<const std::uint8_t> mask, double lambda) {
  if (G.rank() != 1 || mask.size() != G.size()) {
    throw std::invalid_argument("hinge_penalty: mask of length " + std::to_string(mask.size()) +
                                " does not fit saliency of shape " + to_string(G.shape()));
  }
  std::vector<double> z(G.size());
  for (std::size_t i = 0; i < mask.size(); ++i) z[i] = mask[i] ? 1.0 : 0.0;
  auto violations = relu(scale(mul(G, Tensor::constant(G.shape(), std::move(z))), -1.0));
  return scale(sum_all(violations), lambda);
}

CostTerms total_cost(const ForwardTrace& trace, const Example& example, const SaliencyConfig& cfg) {
  cfg.validate();
  CostTerms terms;
  terms.task = task_loss(trace.logit, example.label);
  terms.total = terms.task;
  terms.penalty = Tensor::scalar(0.0);
  if (!cfg.enabled() || example.marked_count() == 0) return terms;

  std::vector<Tensor> levels;
  for (auto level : cfg.levels) levels.push_back(level_tensor(trace, level));
  auto grads = backward({trace.logit, levels, /*create_graph=*/true});

  auto mask = padded_mask(example.rationale, trace.D_dim.size());
  Tensor penalty;
  for (auto& g : grads) {
    auto G = g.rank() == 2 ? sum_axis(g, 1) : g;
    auto term = hinge_penalty(G, mask, cfg.lambda);
    penalty = penalty.defined() ? add(penalty, term) : term;
  }
  terms.penalty = penalty;
  terms.total = add(terms.task, penalty);
  return terms;
}

}  // namespace salient
