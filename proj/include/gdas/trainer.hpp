#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gdas/dataset.hpp"
#include "gdas/network.hpp"

namespace gdas {

// Mean negative log-likelihood of softmax(logits). Throws
// std::invalid_argument on labels outside [0, classes).
Tensor classification_loss(const Tensor& logits, std::span<const int> labels);
double accuracy(const Tensor& logits, std::span<const int> labels);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// One batch-statistics forward pass over the whole dataset, without gradients.
Evaluation evaluate(Network& net, const Dataset& data, const SampleContext& ctx = {});

// Mini-batch order for one epoch: a permutation keyed by (seed, epoch),
// truncated to whole batches (at least one batch).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t dataset_size, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr_max = 0.025;
  double lr_min = 1e-3;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  std::uint64_t seed = 0;
  // When false, the validation split is evaluated after the last epoch only.
  bool eval_each_epoch = true;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  Evaluation train;
  Evaluation valid;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  bool diverged = false;
  // Iteration (0-based, global) at which a non-finite loss appeared.
  std::size_t diverged_at = 0;
};

// SGD with cosine lr, annealed per iteration. Train statistics per epoch are
// the mean over that epoch's mini-batches; valid is a full evaluation at the
// end of each epoch (skipped when `valid` is empty or the config asks
// for a final evaluation only). Stops early on a
// non-finite loss and reports it instead of throwing.
TrainResult train_network(Network& net, const Dataset& train, const Dataset& valid,
                          const TrainConfig& config,
                          const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace gdas
