#pragma once

// The alternating search loop: one SGD step on the network weights W using a
// training batch, then one Adam step on the architecture logits A using a
// validation batch, per iteration.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gdas/dataset.hpp"
#include "gdas/network.hpp"
#include "gdas/optim.hpp"

namespace gdas {

struct SearchConfig {
  std::size_t epochs = 240;
  std::size_t batch_size = 32;
  double w_lr_max = 0.025;
  double w_lr_min = 1e-3;
  double w_momentum = 0.9;
  double w_weight_decay = 3e-4;
  double a_lr = 3e-4;
  double a_weight_decay = 1e-3;
  double a_beta1 = 0.5;
  double a_beta2 = 0.999;
  double tau_start = 10.0;
  double tau_end = 0.1;
  std::uint64_t seed = 0;
  SelectionMode mode = SelectionMode::hard_sampled;
  bool accelerated = false;
  bool fixed_reduction_cell = false;

  // Mode used for forward passes: accelerated overrides `mode`.
  SelectionMode effective_mode() const { return accelerated ? SelectionMode::accelerated : mode; }
  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

class SearchDiverged : public std::runtime_error {
 public:
  SearchDiverged(std::size_t iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

struct MetricRow {
  std::size_t epoch = 0;
  std::size_t iter = 0;  // iterations completed so far
  std::string split;     // "train" (W steps) or "valid" (A steps)
  double loss = 0.0;
  double accuracy = 0.0;
  double tau = 0.0;
  double lr_W = 0.0;
  double lr_A = 0.0;
};

void write_metrics_csv(std::ostream& os, std::span<const MetricRow> rows);

struct StepResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct SearchResult {
  std::vector<MetricRow> metrics;
  // arch params JSON after each epoch
  std::vector<nlohmann::json> snapshots;
  nlohmann::json final_arch;
};

class SearchEngine {
 public:
  SearchEngine(const SearchConfig& config, const SearchSpaceSpec& spec, const NetworkPlan& plan,
               SplitDataset data);

  // Phase-1 update of W on a training batch at the given lr and temperature.
  // Noise is keyed by `iteration`. Leaves A and its gradient buffers untouched.
  StepResult step_W(std::span<const std::size_t> train_indices, double lr, double tau,
                    std::uint64_t iteration);
  // Phase-2 update of A on a validation batch; leaves W untouched.
  StepResult step_A(std::span<const std::size_t> valid_indices, double lr, double tau,
                    std::uint64_t iteration);

  std::size_t iterations_per_epoch() const;
  std::size_t total_iterations() const { return config_.epochs * iterations_per_epoch(); }

  // Runs all epochs. Throws SearchDiverged on a non-finite loss.
  SearchResult run(const std::function<void(const MetricRow&)>& on_row = {});

  Network& network() { return net_; }
  const SearchConfig& config() const { return config_; }
  const SearchSpaceSpec& spec() const { return spec_; }
  const SplitDataset& data() const { return data_; }

 private:
  StepResult step(const Dataset& data, std::span<const std::size_t> indices, double tau,
                  std::uint64_t phase, std::uint64_t iteration, const char* label);

  SearchConfig config_;
  SearchSpaceSpec spec_;
  SplitDataset data_;
  Network net_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> arch_;
  Sgd w_opt_;
  Adam a_opt_;
};

}  // namespace gdas
