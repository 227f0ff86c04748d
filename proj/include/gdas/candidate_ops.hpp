#pragma once

// The candidate operation set applied on cell edges, plus the small
// conv/norm building blocks shared with cell preprocessing and the fixed
// reduction cell.

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "gdas/ops.hpp"
#include "gdas/rng.hpp"
#include "gdas/tensor.hpp"

namespace gdas {

enum class OpKind {
  identity,
  zeroize,
  sep_conv_3x3,
  dil_sep_conv_3x3,
  sep_conv_5x5,
  dil_sep_conv_5x5,
  avg_pool_3x3,
  max_pool_3x3,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> parse_op(std::string_view name);
// Throws std::invalid_argument naming the unknown identifier.
OpKind require_op(std::string_view name);
const std::vector<OpKind>& default_candidates();
bool is_parametric(OpKind kind);
// Throws std::invalid_argument unless the set is non-empty and duplicate-free.
void validate_candidate_set(const std::vector<OpKind>& candidates);

// Conv weight of shape [out, in/groups, kh, kw] drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor init_conv_weight(std::size_t out, std::size_t in_per_group, std::size_t kh, std::size_t kw,
                        Rng& rng);

// Channel normalization with optional learnable affine.
class Norm {
 public:
  Norm(std::size_t channels, bool affine);
  Tensor apply(const Tensor& x) const;
  void collect(std::vector<Tensor>& out) const;

 private:
  Tensor gamma_;
  Tensor beta_;
};

// ReLU -> conv -> norm.
class ReluConvBn {
 public:
  ReluConvBn(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw,
             const ops::Conv2dAttrs& attrs, bool affine, Rng& rng);
  Tensor apply(const Tensor& x) const;
  void collect(std::vector<Tensor>& out) const;

 private:
  Tensor weight_;
  ops::Conv2dAttrs attrs_;
  Norm norm_;
};

// Halves spatial size with two 1x1 stride-2 convs on pixel grids offset by
// one, channel-concatenated and normalized.
class FactorizedReduce {
 public:
  FactorizedReduce(std::size_t in, std::size_t out, bool affine, Rng& rng);
  Tensor apply(const Tensor& x) const;
  void collect(std::vector<Tensor>& out) const;

 private:
  Tensor even_;
  Tensor odd_;
  Norm norm_;
};

// One candidate operation F_k with its private weights W^k on one edge.
class OpInstance {
 public:
  OpInstance(OpKind kind, std::size_t in_channels, std::size_t out_channels, std::size_t stride,
             bool affine, Rng& rng);

  // Throws ShapeError when x does not carry in_channels channels.
  Tensor apply(const Tensor& x) const;

  OpKind kind() const { return kind_; }
  std::size_t stride() const { return stride_; }
  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::vector<Tensor> weights() const;
  // Output shape for an input of the given shape.
  Shape output_shape(const Shape& input) const;

 private:
  Tensor apply_sep_conv(const Tensor& x, std::size_t kernel, std::size_t dilation) const;

  OpKind kind_;
  std::size_t in_;
  std::size_t out_;
  std::size_t stride_;
  Tensor depthwise_;
  Tensor pointwise_;
  std::optional<Norm> norm_;
  std::optional<ReluConvBn> projection_;
  std::optional<FactorizedReduce> reduce_;
};

// Spatial extent after a candidate op with the given stride.
std::size_t strided_extent(std::size_t extent, std::size_t stride);

}  // namespace gdas
