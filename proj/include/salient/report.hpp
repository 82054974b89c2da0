#pragma once

#include <optional>
#include <string>

#include "salient/evaluation.hpp"

namespace salient {

struct PredictionPair {
  std::optional<int> baseline;
  std::optional<int> saliency;
};

// Shading bucket (1..7, darkest = 7) for the token at `rank` among `k`
// highlighted tokens.
int heatmap_bucket(std::size_t rank, std::size_t k);

// Static HTML document for one example: the sentence with its top-k
// word-level salient tokens shaded by rank, a sidebar listing the marked
// (rationale) tokens, and the predictions when given. When `baseline` is
// supplied, its heatmap is rendered as a second row above the main one.
std::string render_heatmap(const SaliencyReport& report, const PredictionPair& predictions,
                           std::size_t k = 6, const SaliencyReport* baseline = nullptr);

std::string html_escape(const std::string& text);

}  // namespace salient
