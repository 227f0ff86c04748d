#pragma once

// Differentiable categorical sampling over the candidates of each edge.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "gdas/tensor.hpp"

namespace gdas {

// Softmax of one edge's logits. Throws std::invalid_argument on non-finite input.
std::vector<double> edge_probabilities(std::span<const double> logits);

// Identifies one edge's noise draw inside a run.
struct NoiseKey {
  std::uint64_t seed = 0;
  std::uint64_t phase = 0;
  std::uint64_t iteration = 0;
  std::uint64_t cell = 0;
  std::uint64_t edge = 0;
};

inline constexpr double kUniformClampLo = 1e-12;
inline constexpr double kUniformClampHi = 1.0 - 1e-12;

// i.i.d. Gumbel(0,1): -log(-log(u)), u clamped into [1e-12, 1 - 1e-12].
std::vector<double> gumbel_noise(const NoiseKey& key, std::size_t count);
double gumbel_from_uniform(double u);

// argmax_k (logits_k + noise_k); ties go to the lowest index.
std::size_t gumbel_argmax(std::span<const double> logits, std::span<const double> noise);
std::vector<double> one_hot(std::size_t size, std::size_t index);

// softmax_k((log p_k + o_k) / tau). Throws std::invalid_argument when tau <= 0.
std::vector<double> gumbel_softmax(std::span<const double> logits, std::span<const double> noise,
                                   double tau);

struct TemperatureSchedule {
  double tau_start = 10.0;
  double tau_end = 0.1;
  std::size_t total_steps = 1;
};

// Linear interpolation; steps outside [0, total_steps] are clamped with a warning on stderr.
double anneal_tau(const TemperatureSchedule& schedule, std::size_t step);

enum class SelectionMode { hard_sampled, relaxed, accelerated };

std::string_view selection_mode_name(SelectionMode mode);
// Throws std::invalid_argument for unknown names.
SelectionMode parse_selection_mode(std::string_view name);

// Per-edge sampling result for one cell instance. Rows index edges.
struct EdgeSelection {
  // [E,K] mixture weights: hard one-hot values with straight-through
  // gradients (hard/accelerated modes) or h~ itself (relaxed mode).
  Tensor weights;
  // [E,K] Gumbel-softmax relaxation h~; part of the graph when the logits
  // require gradients.
  Tensor soft;
  // Hard sample per edge.
  std::vector<std::size_t> argmax;
};

// Samples every edge of one cell from logits [E,K] with noise of length E*K.
EdgeSelection select_edges(const Tensor& logits, std::span<const double> noise, double tau,
                           SelectionMode mode);

// Single-edge straight-through pair: value is the hard one-hot, gradients
// flow through the relaxed vector.
EdgeSelection straight_through_select(const Tensor& edge_logits, std::span<const double> noise,
                                      double tau);

}  // namespace gdas
