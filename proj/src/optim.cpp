#include "gdas/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gdas {

double cosine_lr(std::size_t step, std::size_t total, double lr_max, double lr_min) {
  if (total == 0) return lr_max;
  if (step > total) throw std::invalid_argument("cosine_lr: step exceeds total");
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

namespace {

std::vector<std::vector<double>> zero_state(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.numel(), 0.0);
  return out;
}

double grad_at(const Tensor& p, std::size_t i) { return p.has_grad() ? p.grad()[i] : 0.0; }

}  // namespace

Sgd::Sgd(std::vector<Tensor> params, double momentum, double weight_decay)
    : params_(std::move(params)),
      velocity_(zero_state(params_)),
      momentum_(momentum),
      weight_decay_(weight_decay) {}

void Sgd::step(double lr) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    auto w = p.data();
    auto& vel = velocity_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      vel[i] = momentum_ * vel[i] + grad_at(p, i);
      w[i] -= lr * vel[i] + lr * weight_decay_ * w[i];
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2, double weight_decay, double eps)
    : params_(std::move(params)),
      m_(zero_state(params_)),
      v_(zero_state(params_)),
      beta1_(beta1),
      beta2_(beta2),
      weight_decay_(weight_decay),
      eps_(eps) {}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    auto w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grad_at(p, i);
      m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g;
      v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g * g;
      const double update = (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
      w[i] -= lr * update + lr * weight_decay_ * w[i];
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace gdas
