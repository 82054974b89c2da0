#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "salient/tensor.hpp"

// Differentiable tensor operations. Every backward rule is written in terms of
// these same operations, so gradients computed with graph recording enabled can
// themselves be differentiated. Routing decisions (relu masks, max-pool argmax,
// elementwise-max winners) are frozen at forward time; their second derivative
// is zero.
namespace salient {

// Flat source index per output element; -1 produces a zero.
using IndexList = std::shared_ptr<const std::vector<std::int64_t>>;

// Elementwise binary ops. Shapes must match, except that an operand holding a
// single element (shape [] or [1]) is broadcast against the other.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// log(1 + exp(a)), evaluated without overflow.
Tensor softplus(const Tensor& a);

Tensor sum_all(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis);
// Inserts a new axis of the given extent at `axis`, repeating the input.
Tensor broadcast_axis(const Tensor& a, std::size_t axis, std::size_t extent);

Tensor concat(const Tensor& a, const Tensor& b);  // along the last axis
Tensor slice_last(const Tensor& a, std::size_t begin, std::size_t length);
// Adjoint of slice_last: places `a` at `begin` inside zeros of last extent `total`.
Tensor pad_last(const Tensor& a, std::size_t begin, std::size_t total);

// Elementwise max of two equally shaped tensors; ties go to `a`.
Tensor maximum(const Tensor& a, const Tensor& b);
// Max over one axis, which is removed. Ties go to the lowest index.
Tensor maxpool_axis(const Tensor& a, std::size_t axis);

Tensor gather(const Tensor& a, IndexList indices, Shape out_shape);
Tensor scatter_add(const Tensor& a, IndexList indices, Shape out_shape);

Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);

// Same-length 1-D convolution over the rows of `input` (n x d_in) with
// zero padding. `kernel` is w x d_in x d_out with w odd, `bias` is d_out.
Tensor conv1d_same(const Tensor& input, const Tensor& kernel, const Tensor& bias);

}  // namespace salient
