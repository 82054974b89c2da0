#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "salient/data.hpp"
#include "salient/model.hpp"
#include "salient/tensor.hpp"

namespace salient {

enum class Level { word, intermediate, decision };

inline constexpr Level kAllLevels[] = {Level::word, Level::intermediate, Level::decision};

std::string_view to_string(Level level);
Level parse_level(std::string_view text);
// Comma-separated list, e.g. "word,intermediate,decision".
std::vector<Level> parse_levels(std::string_view text);

struct SaliencyConfig {
  double lambda = 0.0;  // shared by every level
  std::vector<Level> levels{Level::word, Level::intermediate, Level::decision};

  bool enabled() const { return lambda > 0.0 && !levels.empty(); }
  void validate() const;
};

// Rationale cut or zero-extended to the padded sequence length. Truncated
// tokens lose their marks; padding positions are never marked.
std::vector<std::uint8_t> padded_mask(std::span<const std::uint8_t> rationale, std::size_t length);

// The activation regularized at `level`: W, I or D_dim.
const Tensor& level_tensor(const ForwardTrace& trace, Level level);

// Binary cross-entropy on sigmoid(logit), as softplus(-logit) for y = 1 and
// softplus(logit) for y = 0.
Tensor task_loss(const Tensor& logit, int label);

// Per-position summed gradient of the logit: sum_j d logit / d level[i, j]
// for a 2-D level, d logit / d level[i] for a 1-D one. Pass create_graph when
// the result feeds a cost that will be differentiated again.
Tensor token_saliency(const Tensor& level, const Tensor& logit, bool create_graph);

// lambda * sum_i max(0, -Z_i * G_i); |mask| must equal |G|.
Tensor hinge_penalty(const Tensor& G, std::span<const std::uint8_t> mask, double lambda);

struct CostTerms {
  Tensor total;
  Tensor task;
  Tensor penalty;  // sum of the enabled hinge terms (scalar zero if none)
};

// Task loss plus one hinge term per enabled level. With an all-zero rationale
// or lambda == 0, total is the task loss itself.
CostTerms total_cost(const ForwardTrace& trace, const Example& example, const SaliencyConfig& cfg);

}  // namespace salient
