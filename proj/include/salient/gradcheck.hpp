#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace salient {

struct GradcheckOptions {
  std::size_t embed_dim = 8;
  std::size_t max_len = 6;
  std::size_t examples = 5;
  double eps = 1e-4;
  std::uint64_t seed = 0;
  double lambda = 0.5;
};

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> ops;      // one per differentiable op
  std::vector<double> cost_errors;      // full three-level cost, per example
  double cost_max = 0.0;
};

// Central finite differences against the reverse-mode gradients: every op on
// random inputs kept away from kinks, then d(cost)/d(parameters) of the full
// three-level saliency cost on positive synthetic examples, dropout disabled.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace salient
