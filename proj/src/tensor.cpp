#include "salient/tensor.hpp"

#include <atomic>
#include <sstream>
#include <stdexcept>

namespace salient {
namespace {

std::atomic<std::uint64_t> next_node_id{1};
thread_local bool grad_enabled = true;

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> values) {
  if (num_elements(shape) != values.size()) {
    throw std::invalid_argument("tensor: shape " + to_string(shape) + " holds " +
                                std::to_string(num_elements(shape)) + " values, got " +
                                std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t num_elements(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(make_node(std::move(shape), std::move(values)));
}

Tensor Tensor::zeros(Shape shape) {
  auto n = num_elements(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
  auto n = num_elements(shape);
  return constant(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return constant({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  auto node = make_node(std::move(shape), std::move(values));
  node->requires_grad = true;
  return Tensor(std::move(node));
}

Tensor Tensor::from_op(const char* op, Shape shape, std::vector<double> values,
                       std::vector<Tensor> inputs, BackwardFn backward) {
  auto node = make_node(std::move(shape), std::move(values));
  node->op = op;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (grad_enabled && any) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("tensor: access to undefined tensor");
  return node_->shape;
}

std::size_t Tensor::size() const { return values().size(); }

std::span<const double> Tensor::values() const {
  if (!node_) throw std::logic_error("tensor: access to undefined tensor");
  return node_->values;
}

std::span<double> Tensor::mutable_values() {
  if (!node_) throw std::logic_error("tensor: access to undefined tensor");
  return node_->values;
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("tensor: item() on shape " + to_string(shape()));
  }
  return node_->values[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  const auto& s = shape();
  if (s.size() != 2 || row >= s[0] || col >= s[1]) {
    throw std::out_of_range("tensor: at(" + std::to_string(row) + "," + std::to_string(col) +
                            ") on shape " + to_string(s));
  }
  return node_->values[row * s[1] + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && !node_->backward; }

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

std::uint64_t Tensor::id() const { return node_ ? node_->id : 0; }

Tensor Tensor::detach() const { return constant(shape(), node_->values); }

bool is_grad_enabled() { return grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(grad_enabled) { grad_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_enabled = previous_; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(grad_enabled) { grad_enabled = enabled; }
GradModeGuard::~GradModeGuard() { grad_enabled = previous_; }

}  // namespace salient
