#pragma once

#include <functional>
#include <span>
#include <vector>

#include "salient/tensor.hpp"

namespace salient {

struct GradRequest {
  Tensor root;                  // shape [] or [1]
  std::vector<Tensor> targets;  // leaves or interior nodes of root's graph
  // When set, the returned gradients are graph-connected and can be
  // differentiated again (double backprop).
  bool create_graph = false;
};

// Reverse-mode sweep. Result i is d(root)/d(targets[i]) with the target's
// shape; a target the root does not depend on gets zeros. Fan-out is summed.
std::vector<Tensor> backward(const GradRequest& request);

// Convenience wrapper for a single target.
Tensor grad(const Tensor& root, const Tensor& target, bool create_graph = false);

using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

// Largest |analytic - central difference| / max(1, |central difference|) over
// every coordinate of every input. `f` must be deterministic.
double finite_diff_check(const ScalarFn& f, std::span<const Tensor> inputs, double eps);
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double eps);

}  // namespace salient
