#pragma once

#include <cstddef>
#include <vector>

#include "gdas/tensor.hpp"

namespace gdas {

// Cosine annealing from lr_max at step 0 to lr_min at step == total.
double cosine_lr(std::size_t step, std::size_t total, double lr_max = 0.025, double lr_min = 1e-3);

// SGD with heavy-ball momentum. Weight decay is decoupled:
//   v <- momentum * v + g;  w <- w - lr * v - lr * wd * w
// A parameter without a gradient buffer is treated as having zero gradient.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double momentum = 0.9, double weight_decay = 3e-4);
  void step(double lr);
  void zero_grad();
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_;
  double weight_decay_;
};

// Adam with bias correction and decoupled weight decay:
//   w <- w - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * w
class Adam {
 public:
  Adam(std::vector<Tensor> params, double beta1 = 0.5, double beta2 = 0.999,
       double weight_decay = 1e-3, double eps = 1e-8);
  void step(double lr);
  void zero_grad();
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double beta1_;
  double beta2_;
  double weight_decay_;
  double eps_;
  std::size_t t_ = 0;
};

}  // namespace gdas
