#include "gdas/trainer.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gdas/ops.hpp"
#include "gdas/optim.hpp"
#include "gdas/rng.hpp"

namespace gdas {

Tensor classification_loss(const Tensor& logits, std::span<const int> labels) {
  return ops::nll(ops::log_softmax(logits), labels);
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("accuracy: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  const auto x = logits.data();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k) {
      if (x[i * c + k] > x[i * c + best]) best = k;
    }
    correct += static_cast<int>(best) == labels[i] ? 1 : 0;
  }
  return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
}

Evaluation evaluate(Network& net, const Dataset& data, const SampleContext& ctx) {
  NoGradGuard guard;
  const Tensor logits = net.forward(data.all_images(), ctx);
  return {classification_loss(logits, data.labels).item(), accuracy(logits, data.labels)};
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t dataset_size, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch) {
  if (dataset_size == 0 || batch_size == 0) {
    throw std::invalid_argument("epoch_batches: empty dataset or zero batch size");
  }
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(hash_words({seed, epoch}));
  rng.shuffle(order);
  const std::size_t bs = std::min(batch_size, dataset_size);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start + bs <= dataset_size; start += bs) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(start + bs));
  }
  return out;
}

TrainResult train_network(Network& net, const Dataset& train, const Dataset& valid,
                          const TrainConfig& config,
                          const std::function<void(const EpochRecord&)>& on_epoch) {
  if (config.epochs == 0) throw std::invalid_argument("train_network: epochs must be >= 1");
  const std::uint64_t batch_seed = derive_seed(config.seed, "train_batches");
  const std::size_t per_epoch = epoch_batches(train.size(), config.batch_size, batch_seed, 0).size();
  const std::size_t total = config.epochs * per_epoch;
  Sgd sgd(net.weights(), config.momentum, config.weight_decay);
  TrainResult result;
  std::size_t iter = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0, acc_sum = 0.0;
    const auto batches = epoch_batches(train.size(), config.batch_size, batch_seed, epoch);
    for (const auto& idx : batches) {
      const double lr = cosine_lr(iter, total > 1 ? total - 1 : 1, config.lr_max, config.lr_min);
      rec.lr = lr;
      const auto labels = train.batch_labels(idx);
      sgd.zero_grad();
      const Tensor logits = net.forward(train.batch_images(idx));
      const Tensor loss = classification_loss(logits, labels);
      if (!std::isfinite(loss.item())) {
        result.diverged = true;
        result.diverged_at = iter;
        return result;
      }
      backward(loss);
      sgd.step(lr);
      loss_sum += loss.item();
      acc_sum += accuracy(logits, labels);
      ++iter;
    }
    rec.train = {loss_sum / static_cast<double>(batches.size()),
                 acc_sum / static_cast<double>(batches.size())};
    if (valid.size() > 0 && (config.eval_each_epoch || epoch + 1 == config.epochs)) {
      rec.valid = evaluate(net, valid);
      if (!std::isfinite(rec.valid.loss)) {
        result.diverged = true;
        result.diverged_at = iter;
        result.epochs.push_back(rec);
        return result;
      }
    }
    result.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace gdas
