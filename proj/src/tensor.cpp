#include "gdas/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace gdas {
namespace {
thread_local bool g_grad_mode = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive: " + shape_str(shape));
  }
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(impl->data.size(), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<double> Tensor::data() { return impl_->data; }
std::span<const double> Tensor::data() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  impl_->requires_grad = flag;
  if (flag && impl_->grad.size() != impl_->data.size()) impl_->grad.assign(numel(), 0.0);
}

bool Tensor::has_grad() const { return impl_->grad.size() == impl_->data.size(); }

std::span<double> Tensor::grad() {
  if (!has_grad()) throw std::logic_error("tensor has no gradient buffer");
  return impl_->grad;
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient buffer");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(impl_->shape, impl_->data, false); }

bool Tensor::is_leaf() const { return impl_->node == nullptr; }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                           const char* name, std::function<void(const Tensor& out)> backward_fn) {
  Tensor out = from(std::move(shape), std::move(values), false);
  if (!g_grad_mode) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!needs) return out;
  out.impl_->requires_grad = true;
  auto node = std::make_shared<detail::GradNode>();
  node->name = name;
  node->inputs = std::move(inputs);
  node->backward_fn = std::move(backward_fn);
  out.impl_->node = std::move(node);
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward() requires a scalar loss, got shape " +
                                (loss.defined() ? shape_str(loss.shape()) : std::string("<null>")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<detail::TensorImpl*> order;
  std::vector<Tensor> keep;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<Tensor, std::size_t>> stack;
  stack.emplace_back(loss, 0);
  visited.insert(loss.impl());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    auto* impl = t.impl();
    if (impl->node && next < impl->node->inputs.size()) {
      const Tensor& child = impl->node->inputs[next++];
      if (child.defined() && child.requires_grad() && !visited.count(child.impl())) {
        visited.insert(child.impl());
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(impl);
    keep.push_back(t);
    stack.pop_back();
  }

  // Intermediate adjoints start from zero on every call; leaves accumulate.
  for (auto* impl : order) {
    if (impl->node) impl->grad.assign(impl->data.size(), 0.0);
  }
  loss.impl()->grad.resize(1, 0.0);
  loss.impl()->grad[0] += 1.0;

  for (auto it = keep.rbegin(); it != keep.rend(); ++it) {
    auto* impl = it->impl();
    if (impl->node) impl->node->backward_fn(*it);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

bool grad_mode_enabled() { return g_grad_mode; }

std::span<double> grad_sink(const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) return {};
  auto* impl = t.impl();
  if (impl->grad.size() != impl->data.size()) impl->grad.assign(impl->data.size(), 0.0);
  return impl->grad;
}

std::span<const double> upstream(const Tensor& out) { return out.impl()->grad; }

}  // namespace gdas
