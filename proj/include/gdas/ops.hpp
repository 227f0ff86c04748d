#pragma once

// Differentiable primitives. Image tensors are NCHW. Shape errors are
// reported as ShapeError naming the primitive and the offending shapes.

#include <cstddef>
#include <span>
#include <vector>

#include "gdas/tensor.hpp"

namespace gdas::ops {

struct Conv2dAttrs {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t dilation_h = 1;
  std::size_t dilation_w = 1;
  std::size_t groups = 1;

  static Conv2dAttrs square(std::size_t stride, std::size_t pad, std::size_t dilation = 1,
                            std::size_t groups = 1) {
    return {stride, stride, pad, pad, dilation, dilation, groups};
  }
};

struct Pool2dAttrs {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;
};

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// x + offset, where offset is a constant (no gradient) of the same size.
Tensor add_constant(const Tensor& x, std::span<const double> offset);
Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sum(const Tensor& x);
// Same data under a new shape with equal element count.
Tensor reshape(const Tensor& x, Shape shape);
Tensor mean(const Tensor& x);

// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);
// x [N,F], weight [O,F], bias [O] (bias may be undefined) -> [N,O]
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

// x [N,C,H,W], weight [O, C/groups, KH, KW] -> [N,O,OH,OW]
Tensor conv2d(const Tensor& x, const Tensor& weight, const Conv2dAttrs& attrs);
Tensor bias_add_channels(const Tensor& x, const Tensor& bias);
// Padding cells are excluded from the average.
Tensor avg_pool2d(const Tensor& x, const Pool2dAttrs& attrs);
// Ties send the gradient to the first maximal element in scan order.
Tensor max_pool2d(const Tensor& x, const Pool2dAttrs& attrs);
// y[n,c,i,j] = x[n,c,i+dy,j+dx], zero outside.
Tensor shift2d(const Tensor& x, std::size_t dy, std::size_t dx);
Tensor concat_channels(std::span<const Tensor> parts);
// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x);
// Per-channel batch statistics. gamma/beta may be undefined (no affine).
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Row-wise over the last axis.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
// Mean negative log-likelihood of log-probabilities [N,C] at the given labels.
Tensor nll(const Tensor& log_probs, std::span<const int> labels);

// x * weights[index]; gradient reaches both x and weights[index].
Tensor scale_by(const Tensor& x, const Tensor& weights, std::size_t index);
// Value equals `hard`; the adjoint is passed to `soft` unchanged.
Tensor straight_through(std::span<const double> hard, const Tensor& soft);

Shape conv2d_output_shape(const Shape& x, const Shape& weight, const Conv2dAttrs& attrs);
std::size_t pooled_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad,
                          std::size_t dilation = 1);

}  // namespace gdas::ops
