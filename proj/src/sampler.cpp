#include "gdas/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

#include "gdas/ops.hpp"
#include "gdas/rng.hpp"

namespace gdas {

std::vector<double> edge_probabilities(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("edge_probabilities: empty logits");
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::invalid_argument("edge_probabilities: non-finite logit");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) z += (p[k] = std::exp(logits[k] - mx));
  for (auto& v : p) v /= z;
  return p;
}

double gumbel_from_uniform(double u) {
  u = std::clamp(u, kUniformClampLo, kUniformClampHi);
  return -std::log(-std::log(u));
}

std::vector<double> gumbel_noise(const NoiseKey& key, std::size_t count) {
  const CounterRng stream(hash_words({key.seed, key.phase, key.iteration, key.cell, key.edge}));
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) out[k] = gumbel_from_uniform(stream.uniform(k));
  return out;
}

std::size_t gumbel_argmax(std::span<const double> logits, std::span<const double> noise) {
  if (logits.size() != noise.size() || logits.empty()) {
    throw std::invalid_argument("gumbel_argmax: " + std::to_string(logits.size()) +
                                " logits vs " + std::to_string(noise.size()) + " noise entries");
  }
  std::size_t best = 0;
  double best_value = logits[0] + noise[0];
  for (std::size_t k = 1; k < logits.size(); ++k) {
    const double v = logits[k] + noise[k];
    if (v > best_value) {
      best_value = v;
      best = k;
    }
  }
  return best;
}

std::vector<double> one_hot(std::size_t size, std::size_t index) {
  std::vector<double> v(size, 0.0);
  v.at(index) = 1.0;
  return v;
}

std::vector<double> gumbel_softmax(std::span<const double> logits, std::span<const double> noise,
                                   double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax: tau must be positive");
  if (logits.size() != noise.size()) {
    throw std::invalid_argument("gumbel_softmax: logits/noise size mismatch");
  }
  const auto p = edge_probabilities(logits);
  std::vector<double> z(p.size());
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = (std::log(p[k]) + noise[k]) / tau;
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (auto& v : z) total += (v = std::exp(v - mx));
  for (auto& v : z) v /= total;
  return z;
}

double anneal_tau(const TemperatureSchedule& schedule, std::size_t step) {
  if (schedule.total_steps == 0) return schedule.tau_end;
  if (step > schedule.total_steps) {
    std::cerr << "warning: tau schedule step " << step << " clamped to " << schedule.total_steps
              << '\n';
    step = schedule.total_steps;
  }
  const double frac = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
  // Convex combination hits both endpoints exactly.
  return (1.0 - frac) * schedule.tau_start + frac * schedule.tau_end;
}

std::string_view selection_mode_name(SelectionMode mode) {
  switch (mode) {
    case SelectionMode::hard_sampled:
      return "hard_sampled";
    case SelectionMode::relaxed:
      return "relaxed";
    case SelectionMode::accelerated:
      return "accelerated";
  }
  return "unknown";
}

SelectionMode parse_selection_mode(std::string_view name) {
  for (auto m : {SelectionMode::hard_sampled, SelectionMode::relaxed, SelectionMode::accelerated}) {
    if (selection_mode_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown selection mode '" + std::string(name) + "'");
}

EdgeSelection select_edges(const Tensor& logits, std::span<const double> noise, double tau,
                           SelectionMode mode) {
  if (logits.rank() != 2) {
    throw ShapeError("select_edges: logits must be [E,K], got " + shape_str(logits.shape()));
  }
  if (noise.size() != logits.numel()) {
    throw ShapeError("select_edges: noise length " + std::to_string(noise.size()) +
                     " vs logits " + shape_str(logits.shape()));
  }
  if (!(tau > 0.0)) throw std::invalid_argument("select_edges: tau must be positive");
  const std::size_t edges = logits.dim(0), k = logits.dim(1);
  for (double v : logits.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("select_edges: non-finite logit");
  }

  EdgeSelection sel;
  sel.argmax.resize(edges);
  std::vector<double> hard(logits.numel(), 0.0);
  for (std::size_t e = 0; e < edges; ++e) {
    sel.argmax[e] = gumbel_argmax(logits.data().subspan(e * k, k), noise.subspan(e * k, k));
    hard[e * k + sel.argmax[e]] = 1.0;
  }
  const Tensor log_p = ops::log_softmax(logits);
  sel.soft = ops::softmax(ops::scale(ops::add_constant(log_p, noise), 1.0 / tau));
  sel.weights = mode == SelectionMode::relaxed ? sel.soft : ops::straight_through(hard, sel.soft);
  return sel;
}

EdgeSelection straight_through_select(const Tensor& edge_logits, std::span<const double> noise,
                                      double tau) {
  if (edge_logits.rank() == 1) {
    return select_edges(ops::reshape(edge_logits, {1, edge_logits.numel()}), noise, tau,
                        SelectionMode::hard_sampled);
  }
  return select_edges(edge_logits, noise, tau, SelectionMode::hard_sampled);
}

}  // namespace gdas
