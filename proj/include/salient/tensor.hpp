#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace salient {

using Shape = std::vector<std::size_t>;

std::size_t num_elements(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor;

// Computes the gradient of each input given the gradient of the node's output.
// An empty Tensor in the result means "no contribution" for that input.
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& upstream)>;

// One record on the tape. Ids come from a process-wide counter, so every
// node's inputs carry strictly smaller ids than the node itself.
struct Node {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<Tensor> inputs;
  BackwardFn backward;
};

// Handle to a dense row-major array of doubles that may be part of a
// differentiable computation graph. Copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  // A graph leaf whose gradient can be requested.
  static Tensor parameter(Shape shape, std::vector<double> values);

  // Creates an interior node. Used by op implementations.
  static Tensor from_op(const char* op, Shape shape, std::vector<double> values,
                        std::vector<Tensor> inputs, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::span<const double> values() const;
  // Direct write access for optimizers and initializers. Must not be used
  // while a graph that depends on this tensor is still in use.
  std::span<double> mutable_values();

  double item() const;
  double operator[](std::size_t flat) const { return values()[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  bool is_leaf() const;
  const char* op_name() const;
  std::uint64_t id() const;
  const Node* node() const { return node_.get(); }

  // Same values, no graph connection.
  Tensor detach() const;

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

bool is_grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Sets the recording mode explicitly; restores the previous mode on exit.
class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace salient
