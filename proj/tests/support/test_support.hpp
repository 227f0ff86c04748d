#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <vector>

#include "gdas/rng.hpp"
#include "gdas/tensor.hpp"

namespace gdas::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

struct GradCheck {
  double rel_error = 0.0;
  std::size_t coords = 0;
};

// Central differences of a scalar function against reverse-mode gradients.
// Checks up to `max_coords` coordinates per input (all when smaller).
// Error is ||analytic - numeric|| / max(||analytic||, ||numeric||) over the
// checked coordinates, with an absolute floor for vanishing gradients.
inline GradCheck grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                            double h = 1e-6, std::size_t max_coords = 24,
                            std::uint64_t seed = 7) {
  for (auto& t : inputs) t.zero_grad();
  backward(f());
  std::vector<double> analytic, numeric;
  Rng rng(seed);
  for (auto& t : inputs) {
    std::vector<std::size_t> idx(t.numel());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    idx.resize(std::min(idx.size(), max_coords));
    const std::vector<double> g(t.grad().begin(), t.grad().end());
    for (auto i : idx) {
      const double orig = t.data()[i];
      double plus, minus;
      {
        NoGradGuard guard;
        t.data()[i] = orig + h;
        plus = f().item();
        t.data()[i] = orig - h;
        minus = f().item();
        t.data()[i] = orig;
      }
      analytic.push_back(g[i]);
      numeric.push_back((plus - minus) / (2.0 * h));
    }
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
  return {std::sqrt(diff) / denom, analytic.size()};
}

// Order-sensitive hash of parameter contents for bitwise comparisons.
inline std::uint64_t hash_tensors(const std::vector<Tensor>& ts) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& t : ts) {
    for (double v : t.data()) {
      std::uint64_t bits;
      static_assert(sizeof bits == sizeof v);
      std::memcpy(&bits, &v, sizeof bits);
      h = (h ^ bits) * 1099511628211ull;
    }
  }
  return h;
}

}  // namespace gdas::testing
