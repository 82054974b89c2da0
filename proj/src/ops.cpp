#include "salient/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace salient {
namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + to_string(a.shape()) +
                              " and " + to_string(b.shape()));
}

// Result shape of a scalar-broadcasting binary op.
Shape broadcast_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.size() == 1) return a.shape();
  if (a.size() == 1) return b.shape();
  shape_error(op, a, b);
}

// Reduces a gradient back to the shape of an operand that may have been broadcast.
Tensor unbroadcast(const Tensor& grad, const Tensor& operand) {
  if (grad.shape() == operand.shape()) return grad;
  return reshape(sum_all(grad), operand.shape());
}

template <class F>
std::vector<double> zip_values(const Tensor& a, const Tensor& b, std::size_t n, F f) {
  std::vector<double> out(n);
  auto av = a.values();
  auto bv = b.values();
  const bool a_scalar = av.size() == 1 && n != 1;
  const bool b_scalar = bv.size() == 1 && n != 1;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f(a_scalar ? av[0] : av[i], b_scalar ? bv[0] : bv[i]);
  }
  return out;
}

template <class F>
std::vector<double> map_values(const Tensor& a, F f) {
  auto av = a.values();
  std::vector<double> out(av.size());
  std::transform(av.begin(), av.end(), out.begin(), f);
  return out;
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape remove_axis(const Shape& shape, std::size_t axis) {
  Shape out = shape;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

void check_axis(const char* op, const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                " out of range for shape " + to_string(a.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  auto shape = broadcast_shape("add", a, b);
  auto n = num_elements(shape);
  return Tensor::from_op("add", shape, zip_values(a, b, n, [](double x, double y) { return x + y; }),
                         {a, b}, [a, b](const Tensor& g) -> std::vector<Tensor> {
                           return {unbroadcast(g, a), unbroadcast(g, b)};
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto shape = broadcast_shape("sub", a, b);
  auto n = num_elements(shape);
  return Tensor::from_op("sub", shape, zip_values(a, b, n, [](double x, double y) { return x - y; }),
                         {a, b}, [a, b](const Tensor& g) -> std::vector<Tensor> {
                           return {unbroadcast(g, a), unbroadcast(scale(g, -1.0), b)};
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto shape = broadcast_shape("mul", a, b);
  auto n = num_elements(shape);
  return Tensor::from_op("mul", shape, zip_values(a, b, n, [](double x, double y) { return x * y; }),
                         {a, b}, [a, b](const Tensor& g) -> std::vector<Tensor> {
                           Tensor ga, gb;
                           if (a.requires_grad()) ga = unbroadcast(mul(g, b), a);
                           if (b.requires_grad()) gb = unbroadcast(mul(g, a), b);
                           return {ga, gb};
                         });
}

Tensor scale(const Tensor& a, double factor) {
  return Tensor::from_op("scale", a.shape(), map_values(a, [factor](double x) { return x * factor; }),
                         {a}, [factor](const Tensor& g) -> std::vector<Tensor> {
                           return {scale(g, factor)};
                         });
}

Tensor relu(const Tensor& a) {
  auto mask = Tensor::constant(a.shape(), map_values(a, [](double x) { return x > 0.0 ? 1.0 : 0.0; }));
  return Tensor::from_op("relu", a.shape(), map_values(a, [](double x) { return x > 0.0 ? x : 0.0; }),
                         {a}, [mask](const Tensor& g) -> std::vector<Tensor> {
                           return {mul(g, mask)};
                         });
}

Tensor sigmoid(const Tensor& a) {
  auto f = [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
  };
  return Tensor::from_op("sigmoid", a.shape(), map_values(a, f), {a},
                         [a](const Tensor& g) -> std::vector<Tensor> {
                           auto s = sigmoid(a);
                           auto slope = mul(s, sub(Tensor::scalar(1.0), s));
                           return {mul(g, slope)};
                         });
}

Tensor softplus(const Tensor& a) {
  auto f = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
  return Tensor::from_op("softplus", a.shape(), map_values(a, f), {a},
                         [a](const Tensor& g) -> std::vector<Tensor> {
                           return {mul(g, sigmoid(a))};
                         });
}

Tensor sum_all(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return Tensor::from_op("sum_all", {}, {total}, {a}, [a](const Tensor& g) -> std::vector<Tensor> {
    return {mul(g, Tensor::full(a.shape(), 1.0))};
  });
}

Tensor sum_axis(const Tensor& a, std::size_t axis) {
  check_axis("sum_axis", a, axis);
  auto s = split_at(a.shape(), axis);
  auto av = a.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.extent; ++k) {
      const double* src = av.data() + (o * s.extent + k) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  return Tensor::from_op("sum_axis", remove_axis(a.shape(), axis), std::move(out), {a},
                         [axis, extent = s.extent](const Tensor& g) -> std::vector<Tensor> {
                           return {broadcast_axis(g, axis, extent)};
                         });
}

Tensor broadcast_axis(const Tensor& a, std::size_t axis, std::size_t extent) {
  if (axis > a.rank()) check_axis("broadcast_axis", a, axis);
  Shape shape = a.shape();
  shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(axis), extent);
  auto s = split_at(shape, axis);
  auto av = a.values();
  std::vector<double> out(num_elements(shape));
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.extent; ++k) {
      std::copy_n(av.data() + o * s.inner, s.inner, out.data() + (o * s.extent + k) * s.inner);
    }
  }
  return Tensor::from_op("broadcast_axis", shape, std::move(out), {a},
                         [axis](const Tensor& g) -> std::vector<Tensor> {
                           return {sum_axis(g, axis)};
                         });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || a.rank() != b.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
    shape_error("concat", a, b);
  }
  const std::size_t la = a.shape().back();
  const std::size_t lb = b.shape().back();
  const std::size_t rows = a.size() / std::max<std::size_t>(la, 1);
  Shape shape = a.shape();
  shape.back() = la + lb;
  std::vector<double> out(rows * (la + lb));
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * la, la, out.data() + r * (la + lb));
    std::copy_n(bv.data() + r * lb, lb, out.data() + r * (la + lb) + la);
  }
  return Tensor::from_op("concat", shape, std::move(out), {a, b},
                         [la, lb](const Tensor& g) -> std::vector<Tensor> {
                           return {slice_last(g, 0, la), slice_last(g, la, lb)};
                         });
}

Tensor slice_last(const Tensor& a, std::size_t begin, std::size_t length) {
  if (a.rank() == 0 || begin + length > a.shape().back()) {
    throw std::invalid_argument("slice_last: range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + length) + ") outside shape " +
                                to_string(a.shape()));
  }
  const std::size_t total = a.shape().back();
  const std::size_t rows = a.size() / std::max<std::size_t>(total, 1);
  Shape shape = a.shape();
  shape.back() = length;
  std::vector<double> out(rows * length);
  auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * total + begin, length, out.data() + r * length);
  }
  return Tensor::from_op("slice_last", shape, std::move(out), {a},
                         [begin, total](const Tensor& g) -> std::vector<Tensor> {
                           return {pad_last(g, begin, total)};
                         });
}

Tensor pad_last(const Tensor& a, std::size_t begin, std::size_t total) {
  if (a.rank() == 0 || begin + a.shape().back() > total) {
    throw std::invalid_argument("pad_last: shape " + to_string(a.shape()) + " does not fit at " +
                                std::to_string(begin) + " within " + std::to_string(total));
  }
  const std::size_t length = a.shape().back();
  const std::size_t rows = a.size() / std::max<std::size_t>(length, 1);
  Shape shape = a.shape();
  shape.back() = total;
  std::vector<double> out(rows * total, 0.0);
  auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * length, length, out.data() + r * total + begin);
  }
  return Tensor::from_op("pad_last", shape, std::move(out), {a},
                         [begin, length](const Tensor& g) -> std::vector<Tensor> {
                           return {slice_last(g, begin, length)};
                         });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("maximum", a, b);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size()), mask_a(av.size()), mask_b(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const bool take_a = av[i] >= bv[i];
    out[i] = take_a ? av[i] : bv[i];
    mask_a[i] = take_a ? 1.0 : 0.0;
    mask_b[i] = take_a ? 0.0 : 1.0;
  }
  auto ma = Tensor::constant(a.shape(), std::move(mask_a));
  auto mb = Tensor::constant(a.shape(), std::move(mask_b));
  return Tensor::from_op("maximum", a.shape(), std::move(out), {a, b},
                         [ma, mb](const Tensor& g) -> std::vector<Tensor> {
                           return {mul(g, ma), mul(g, mb)};
                         });
}

Tensor maxpool_axis(const Tensor& a, std::size_t axis) {
  check_axis("maxpool_axis", a, axis);
  auto s = split_at(a.shape(), axis);
  if (s.extent == 0) throw std::invalid_argument("maxpool_axis: empty axis");
  auto av = a.values();
  auto idx = std::make_shared<std::vector<std::int64_t>>(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = o * s.extent * s.inner + i;
      for (std::size_t k = 1; k < s.extent; ++k) {
        std::size_t flat = (o * s.extent + k) * s.inner + i;
        if (av[flat] > av[best]) best = flat;
      }
      (*idx)[o * s.inner + i] = static_cast<std::int64_t>(best);
    }
  }
  return gather(a, std::move(idx), remove_axis(a.shape(), axis));
}

Tensor gather(const Tensor& a, IndexList indices, Shape out_shape) {
  if (indices->size() != num_elements(out_shape)) {
    throw std::invalid_argument("gather: " + std::to_string(indices->size()) +
                                " indices for output shape " + to_string(out_shape));
  }
  auto av = a.values();
  std::vector<double> out(indices->size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto src = (*indices)[k];
    if (src >= static_cast<std::int64_t>(av.size())) {
      throw std::out_of_range("gather: index " + std::to_string(src) + " outside " +
                              to_string(a.shape()));
    }
    out[k] = src < 0 ? 0.0 : av[static_cast<std::size_t>(src)];
  }
  return Tensor::from_op("gather", std::move(out_shape), std::move(out), {a},
                         [indices, in_shape = a.shape()](const Tensor& g) -> std::vector<Tensor> {
                           return {scatter_add(g, indices, in_shape)};
                         });
}

Tensor scatter_add(const Tensor& a, IndexList indices, Shape out_shape) {
  if (indices->size() != a.size()) {
    throw std::invalid_argument("scatter_add: " + std::to_string(indices->size()) +
                                " indices for input shape " + to_string(a.shape()));
  }
  auto av = a.values();
  std::vector<double> out(num_elements(out_shape), 0.0);
  for (std::size_t k = 0; k < av.size(); ++k) {
    auto dst = (*indices)[k];
    if (dst < 0) continue;
    if (dst >= static_cast<std::int64_t>(out.size())) {
      throw std::out_of_range("scatter_add: index " + std::to_string(dst) + " outside " +
                              to_string(out_shape));
    }
    out[static_cast<std::size_t>(dst)] += av[k];
  }
  return Tensor::from_op("scatter_add", std::move(out_shape), std::move(out), {a},
                         [indices, in_shape = a.shape()](const Tensor& g) -> std::vector<Tensor> {
                           return {gather(g, indices, in_shape)};
                         });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (num_elements(shape) != a.size()) {
    throw std::invalid_argument("reshape: " + to_string(a.shape()) + " to " + to_string(shape));
  }
  auto av = a.values();
  return Tensor::from_op("reshape", std::move(shape), std::vector<double>(av.begin(), av.end()), {a},
                         [in_shape = a.shape()](const Tensor& g) -> std::vector<Tensor> {
                           return {reshape(g, in_shape)};
                         });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 input required");
  const auto rows = a.shape()[0];
  const auto cols = a.shape()[1];
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = av[r * cols + c];
  }
  return Tensor::from_op("transpose", {cols, rows}, std::move(out), {a},
                         [](const Tensor& g) -> std::vector<Tensor> { return {transpose(g)}; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) shape_error("matmul", a, b);
  const auto n = a.shape()[0];
  const auto k = a.shape()[1];
  const auto m = b.shape()[1];
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = bv.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += x * brow[j];
    }
  }
  return Tensor::from_op("matmul", {n, m}, std::move(out), {a, b},
                         [a, b](const Tensor& g) -> std::vector<Tensor> {
                           Tensor ga, gb;
                           if (a.requires_grad()) ga = matmul(g, transpose(b));
                           if (b.requires_grad()) gb = matmul(transpose(a), g);
                           return {ga, gb};
                         });
}

Tensor conv1d_same(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  if (input.rank() != 2 || input.shape()[0] == 0) {
    throw std::invalid_argument("conv1d_same: input must be n x d with n >= 1, got " +
                                to_string(input.shape()));
  }
  if (kernel.rank() != 3 || kernel.shape()[1] != input.shape()[1]) {
    throw std::invalid_argument("conv1d_same: kernel " + to_string(kernel.shape()) +
                                " does not match input " + to_string(input.shape()));
  }
  const auto width = kernel.shape()[0];
  const auto d_in = kernel.shape()[1];
  const auto d_out = kernel.shape()[2];
  if (width % 2 == 0) {
    throw std::invalid_argument("conv1d_same: window width must be odd, got " +
                                std::to_string(width));
  }
  if (bias.shape() != Shape{d_out}) {
    throw std::invalid_argument("conv1d_same: bias " + to_string(bias.shape()) +
                                " does not match kernel " + to_string(kernel.shape()));
  }
  const auto n = input.shape()[0];
  const auto half = static_cast<std::int64_t>(width / 2);

  // Unfold each zero-padded window into one row, then a single matmul.
  auto idx = std::make_shared<std::vector<std::int64_t>>(n * width * d_in);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < width; ++t) {
      const auto src = static_cast<std::int64_t>(i + t) - half;
      for (std::size_t c = 0; c < d_in; ++c) {
        (*idx)[(i * width + t) * d_in + c] =
            (src < 0 || src >= static_cast<std::int64_t>(n))
                ? -1
                : src * static_cast<std::int64_t>(d_in) + static_cast<std::int64_t>(c);
      }
    }
  }
  auto windows = gather(input, std::move(idx), {n, width * d_in});
  auto weights = reshape(kernel, {width * d_in, d_out});
  return add(matmul(windows, weights), broadcast_axis(bias, 0, n));
}

}  // namespace salient
