#pragma once

// Dense double tensor with reverse-mode automatic differentiation.
//
// A Tensor is a cheap shared handle. Tensors produced by a primitive whose
// inputs require gradients record a GradNode holding the inputs and an adjoint
// closure; backward() walks those nodes in reverse topological order. Leaf
// gradients accumulate across backward() calls until zero_grad().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdas {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
struct TensorImpl;
struct GradNode;
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  // Throws std::logic_error when no gradient buffer exists.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  // A new leaf holding a copy of the data, disconnected from any graph.
  Tensor detach() const;
  bool is_leaf() const;

  // Identity of the underlying storage.
  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

  // Used by primitives; not part of the everyday surface.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> inputs, const char* name,
                            std::function<void(const Tensor& out)> backward_fn);
  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend void backward(const Tensor& loss);
};

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
// Throws std::invalid_argument if loss is not a single element.
void backward(const Tensor& loss);

// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

namespace detail {

struct GradNode {
  const char* name = "";
  std::vector<Tensor> inputs;
  std::function<void(const Tensor& out)> backward_fn;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<GradNode> node;
};

}  // namespace detail

// Gradient buffer of an input inside a backward closure, or an empty span when
// that input does not take gradients.
std::span<double> grad_sink(const Tensor& t);
// Gradient flowing into a primitive's output during backward().
std::span<const double> upstream(const Tensor& out);

}  // namespace gdas
