#include "gdas/candidate_ops.hpp"

#include <array>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace gdas {
namespace {

struct OpEntry {
  OpKind kind;
  std::string_view name;
};

constexpr std::array<OpEntry, 8> kOps{{
    {OpKind::identity, "identity"},
    {OpKind::zeroize, "zeroize"},
    {OpKind::sep_conv_3x3, "sep_conv_3x3"},
    {OpKind::dil_sep_conv_3x3, "dil_sep_conv_3x3"},
    {OpKind::sep_conv_5x5, "sep_conv_5x5"},
    {OpKind::dil_sep_conv_5x5, "dil_sep_conv_5x5"},
    {OpKind::avg_pool_3x3, "avg_pool_3x3"},
    {OpKind::max_pool_3x3, "max_pool_3x3"},
}};

}  // namespace

std::string_view op_name(OpKind kind) {
  for (const auto& e : kOps) {
    if (e.kind == kind) return e.name;
  }
  return "unknown";
}

std::optional<OpKind> parse_op(std::string_view name) {
  for (const auto& e : kOps) {
    if (e.name == name) return e.kind;
  }
  return std::nullopt;
}

OpKind require_op(std::string_view name) {
  if (auto kind = parse_op(name)) return *kind;
  throw std::invalid_argument("unknown candidate operation '" + std::string(name) + "'");
}

const std::vector<OpKind>& default_candidates() {
  static const std::vector<OpKind> all = [] {
    std::vector<OpKind> v;
    for (const auto& e : kOps) v.push_back(e.kind);
    return v;
  }();
  return all;
}

bool is_parametric(OpKind kind) {
  switch (kind) {
    case OpKind::sep_conv_3x3:
    case OpKind::dil_sep_conv_3x3:
    case OpKind::sep_conv_5x5:
    case OpKind::dil_sep_conv_5x5:
      return true;
    default:
      return false;
  }
}

void validate_candidate_set(const std::vector<OpKind>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("candidate set is empty");
  std::set<OpKind> seen;
  for (auto k : candidates) {
    if (!seen.insert(k).second) {
      throw std::invalid_argument("candidate '" + std::string(op_name(k)) + "' listed twice");
    }
  }
}

std::size_t strided_extent(std::size_t extent, std::size_t stride) {
  return ops::pooled_extent(extent, 1, stride, 0);
}

Tensor init_conv_weight(std::size_t out, std::size_t in_per_group, std::size_t kh, std::size_t kw,
                        Rng& rng) {
  const std::size_t fan_in = in_per_group * kh * kw;
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> values(out * fan_in);
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from({out, in_per_group, kh, kw}, std::move(values), true);
}

Norm::Norm(std::size_t channels, bool affine) {
  if (affine) {
    gamma_ = Tensor::full({channels}, 1.0, true);
    beta_ = Tensor::zeros({channels}, true);
  }
}

Tensor Norm::apply(const Tensor& x) const { return ops::batch_norm(x, gamma_, beta_); }

void Norm::collect(std::vector<Tensor>& out) const {
  if (gamma_.defined()) {
    out.push_back(gamma_);
    out.push_back(beta_);
  }
}

ReluConvBn::ReluConvBn(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw,
                       const ops::Conv2dAttrs& attrs, bool affine, Rng& rng)
    : weight_(init_conv_weight(out, in / attrs.groups, kh, kw, rng)),
      attrs_(attrs),
      norm_(out, affine) {}

Tensor ReluConvBn::apply(const Tensor& x) const {
  return norm_.apply(ops::conv2d(ops::relu(x), weight_, attrs_));
}

void ReluConvBn::collect(std::vector<Tensor>& out) const {
  out.push_back(weight_);
  norm_.collect(out);
}

FactorizedReduce::FactorizedReduce(std::size_t in, std::size_t out, bool affine, Rng& rng)
    : norm_(out, affine) {
  if (out < 2) throw std::invalid_argument("factorized reduce needs at least 2 output channels");
  even_ = init_conv_weight(out / 2, in, 1, 1, rng);
  odd_ = init_conv_weight(out - out / 2, in, 1, 1, rng);
}

Tensor FactorizedReduce::apply(const Tensor& x) const {
  const auto attrs = ops::Conv2dAttrs::square(2, 0);
  const Tensor activated = ops::relu(x);
  const Tensor parts[] = {ops::conv2d(activated, even_, attrs),
                          ops::conv2d(ops::shift2d(activated, 1, 1), odd_, attrs)};
  return norm_.apply(ops::concat_channels(parts));
}

void FactorizedReduce::collect(std::vector<Tensor>& out) const {
  out.push_back(even_);
  out.push_back(odd_);
  norm_.collect(out);
}

OpInstance::OpInstance(OpKind kind, std::size_t in_channels, std::size_t out_channels,
                       std::size_t stride, bool affine, Rng& rng)
    : kind_(kind), in_(in_channels), out_(out_channels), stride_(stride) {
  if (stride != 1 && stride != 2) throw std::invalid_argument("candidate stride must be 1 or 2");
  if (in_channels == 0 || out_channels == 0) {
    throw std::invalid_argument("candidate channel counts must be positive");
  }
  switch (kind) {
    case OpKind::zeroize:
      break;
    case OpKind::identity:
      if (stride == 2) {
        reduce_.emplace(in_channels, out_channels, affine, rng);
      } else if (in_channels != out_channels) {
        projection_.emplace(in_channels, out_channels, 1, 1, ops::Conv2dAttrs{}, affine, rng);
      }
      break;
    case OpKind::avg_pool_3x3:
    case OpKind::max_pool_3x3:
      if (in_channels != out_channels) {
        projection_.emplace(in_channels, out_channels, 1, 1, ops::Conv2dAttrs{}, affine, rng);
      }
      break;
    case OpKind::sep_conv_3x3:
    case OpKind::dil_sep_conv_3x3:
    case OpKind::sep_conv_5x5:
    case OpKind::dil_sep_conv_5x5: {
      const std::size_t k =
          (kind == OpKind::sep_conv_3x3 || kind == OpKind::dil_sep_conv_3x3) ? 3 : 5;
      depthwise_ = init_conv_weight(in_channels, 1, k, k, rng);
      pointwise_ = init_conv_weight(out_channels, in_channels, 1, 1, rng);
      norm_.emplace(out_channels, affine);
      break;
    }
  }
}

Tensor OpInstance::apply_sep_conv(const Tensor& x, std::size_t kernel, std::size_t dilation) const {
  const std::size_t pad = dilation * (kernel - 1) / 2;
  const auto dw = ops::Conv2dAttrs::square(stride_, pad, dilation, in_);
  Tensor h = ops::conv2d(ops::relu(x), depthwise_, dw);
  h = ops::conv2d(h, pointwise_, ops::Conv2dAttrs{});
  return norm_->apply(h);
}

Tensor OpInstance::apply(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != in_) {
    throw ShapeError("candidate " + std::string(op_name(kind_)) + ": expected " +
                     std::to_string(in_) + " input channels, got shape " + shape_str(x.shape()));
  }
  switch (kind_) {
    case OpKind::zeroize:
      return Tensor::zeros(output_shape(x.shape()));
    case OpKind::identity:
      if (reduce_) return reduce_->apply(x);
      if (projection_) return projection_->apply(x);
      return x;
    case OpKind::avg_pool_3x3:
    case OpKind::max_pool_3x3: {
      const ops::Pool2dAttrs attrs{3, stride_, 1};
      Tensor pooled = kind_ == OpKind::avg_pool_3x3 ? ops::avg_pool2d(x, attrs)
                                                    : ops::max_pool2d(x, attrs);
      return projection_ ? projection_->apply(pooled) : pooled;
    }
    case OpKind::sep_conv_3x3:
      return apply_sep_conv(x, 3, 1);
    case OpKind::dil_sep_conv_3x3:
      return apply_sep_conv(x, 3, 2);
    case OpKind::sep_conv_5x5:
      return apply_sep_conv(x, 5, 1);
    case OpKind::dil_sep_conv_5x5:
      return apply_sep_conv(x, 5, 2);
  }
  throw std::logic_error("unhandled candidate kind");
}

std::vector<Tensor> OpInstance::weights() const {
  std::vector<Tensor> out;
  if (depthwise_.defined()) out.push_back(depthwise_);
  if (pointwise_.defined()) out.push_back(pointwise_);
  if (norm_) norm_->collect(out);
  if (projection_) projection_->collect(out);
  if (reduce_) reduce_->collect(out);
  return out;
}

Shape OpInstance::output_shape(const Shape& input) const {
  return {input.at(0), out_, strided_extent(input.at(2), stride_),
          strided_extent(input.at(3), stride_)};
}

}  // namespace gdas
