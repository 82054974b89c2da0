#include "salient/grad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "salient/ops.hpp"

namespace salient {
namespace {

// Marks every node lying on some path from the root down to a target, so the
// sweep skips subgraphs that cannot contribute (e.g. parameter branches when
// only activations are requested).
class Relevance {
 public:
  explicit Relevance(const std::vector<Tensor>& targets) {
    for (const auto& t : targets) {
      if (t.defined()) memo_[t.node()] = true;
    }
  }

  bool operator()(const Node* node) {
    if (auto it = memo_.find(node); it != memo_.end()) return it->second;
    // Iterative post-order to stay safe on long chains.
    std::vector<std::pair<const Node*, std::size_t>> stack{{node, 0}};
    while (!stack.empty()) {
      auto& [current, next] = stack.back();
      if (next < current->inputs.size()) {
        const Node* child = current->inputs[next++].node();
        if (child->requires_grad && !memo_.contains(child)) stack.emplace_back(child, 0);
        continue;
      }
      bool relevant = false;
      for (const auto& in : current->inputs) {
        auto it = memo_.find(in.node());
        relevant = relevant || (it != memo_.end() && it->second);
      }
      memo_[current] = relevant;
      stack.pop_back();
    }
    return memo_[node];
  }

 private:
  std::unordered_map<const Node*, bool> memo_;
};

}  // namespace

std::vector<Tensor> backward(const GradRequest& request) {
  const auto& root = request.root;
  if (!root.defined() || root.size() != 1 || root.rank() > 1) {
    throw std::invalid_argument("backward: root must have shape [] or [1], got " +
                                (root.defined() ? to_string(root.shape()) : std::string("undefined")));
  }

  std::vector<Tensor> result(request.targets.size());
  if (root.requires_grad()) {
    Relevance relevant(request.targets);
    std::vector<const Node*> order;
    std::unordered_map<const Node*, Tensor> node_tensor;
    {
      std::vector<Tensor> stack{root};
      node_tensor.emplace(root.node(), root);
      while (!stack.empty()) {
        Tensor t = stack.back();
        stack.pop_back();
        order.push_back(t.node());
        for (const auto& in : t.node()->inputs) {
          if (!in.requires_grad() || node_tensor.contains(in.node())) continue;
          if (!relevant(in.node())) continue;
          node_tensor.emplace(in.node(), in);
          stack.push_back(in);
        }
      }
    }
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });

    GradModeGuard mode(request.create_graph);
    std::unordered_map<const Node*, Tensor> grads;
    grads.emplace(root.node(), Tensor::full(root.shape(), 1.0));
    for (const Node* node : order) {
      auto git = grads.find(node);
      if (git == grads.end() || !node->backward) continue;
      auto input_grads = node->backward(git->second);
      for (std::size_t i = 0; i < node->inputs.size(); ++i) {
        const auto& in = node->inputs[i];
        if (!input_grads[i].defined() || !node_tensor.contains(in.node())) continue;
        auto [it, inserted] = grads.try_emplace(in.node(), input_grads[i]);
        if (!inserted) it->second = add(it->second, input_grads[i]);
      }
      // Interior nodes that are not targets no longer need their gradient.
      bool is_target = false;
      for (const auto& t : request.targets) is_target = is_target || t.node() == node;
      if (!is_target) grads.erase(git);
    }
    for (std::size_t i = 0; i < request.targets.size(); ++i) {
      const auto& t = request.targets[i];
      if (!t.defined()) continue;
      if (auto it = grads.find(t.node()); it != grads.end()) result[i] = it->second;
    }
  }

  for (std::size_t i = 0; i < result.size(); ++i) {
    const auto& t = request.targets[i];
    if (!result[i].defined()) {
      result[i] = Tensor::zeros(t.defined() ? t.shape() : Shape{});
    } else if (!request.create_graph && result[i].requires_grad()) {
      result[i] = result[i].detach();
    }
  }
  return result;
}

Tensor grad(const Tensor& root, const Tensor& target, bool create_graph) {
  return backward({root, {target}, create_graph}).front();
}

double finite_diff_check(const ScalarFn& f, std::span<const Tensor> inputs, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");

  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const auto& x : inputs) {
    auto v = x.values();
    leaves.push_back(Tensor::parameter(x.shape(), {v.begin(), v.end()}));
  }
  auto analytic = backward({f(leaves), leaves, false});

  // Probes stay graph leaves: `f` may differentiate internally (e.g. a cost
  // containing a gradient), which needs a connected graph.
  std::vector<Tensor> probes;
  for (const auto& x : inputs) {
    auto v = x.values();
    probes.push_back(Tensor::parameter(x.shape(), {v.begin(), v.end()}));
  }
  auto evaluate = [&](std::size_t which, std::size_t coord, double value) {
    auto slot = probes[which].mutable_values();
    const double saved = slot[coord];
    slot[coord] = value;
    double out = f(probes).item();
    slot[coord] = saved;
    return out;
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    auto base = inputs[k].values();
    auto g = analytic[k].values();
    for (std::size_t i = 0; i < base.size(); ++i) {
      const double plus = evaluate(k, i, base[i] + eps);
      const double minus = evaluate(k, i, base[i] - eps);
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err = std::abs(g[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  return finite_diff_check([&f](std::span<const Tensor> xs) { return f(xs[0]); },
                           std::span<const Tensor>(&x, 1), eps);
}

}  // namespace salient
