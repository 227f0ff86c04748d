#include "gdas/engine.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "gdas/rng.hpp"
#include "gdas/trainer.hpp"

namespace gdas {

namespace {

constexpr std::uint64_t kPhaseW = 1;
constexpr std::uint64_t kPhaseA = 2;

void require_positive(double v, const char* field) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(field) + " must be positive and finite");
  }
}

void require_fraction(double v, const char* field) {
  if (!(v >= 0.0 && v < 1.0)) throw std::invalid_argument(std::string(field) + " must lie in [0, 1)");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void SearchConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  require_positive(w_lr_max, "w_lr_max");
  require_positive(w_lr_min, "w_lr_min");
  require_positive(a_lr, "a_lr");
  require_positive(tau_start, "tau_start");
  require_positive(tau_end, "tau_end");
  require_fraction(w_momentum, "w_momentum");
  require_fraction(a_beta1, "a_beta1");
  require_fraction(a_beta2, "a_beta2");
  if (w_weight_decay < 0.0) throw std::invalid_argument("w_weight_decay must be >= 0");
  if (a_weight_decay < 0.0) throw std::invalid_argument("a_weight_decay must be >= 0");
}

void write_metrics_csv(std::ostream& os, std::span<const MetricRow> rows) {
  os << "epoch,iter,split,loss,accuracy,tau,lr_W,lr_A\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.iter << ',' << r.split << ',' << fmt(r.loss) << ','
       << fmt(r.accuracy) << ',' << fmt(r.tau) << ',' << fmt(r.lr_W) << ',' << fmt(r.lr_A) << '\n';
  }
}

SearchEngine::SearchEngine(const SearchConfig& config, const SearchSpaceSpec& spec,
                           const NetworkPlan& plan, SplitDataset data)
    : config_(config),
      spec_(spec),
      data_(std::move(data)),
      net_(build_search_network(spec, plan, config.fixed_reduction_cell, config.seed)),
      weights_(net_.weights()),
      arch_(net_.arch().tensors()),
      w_opt_(weights_, config.w_momentum, config.w_weight_decay),
      a_opt_(arch_, config.a_beta1, config.a_beta2, config.a_weight_decay) {
  config_.validate();
  if (data_.train.size() == 0 || data_.valid.size() == 0) {
    throw std::invalid_argument("search needs non-empty train and valid splits");
  }
}

std::size_t SearchEngine::iterations_per_epoch() const {
  return std::max<std::size_t>(1, data_.train.size() / config_.batch_size);
}

StepResult SearchEngine::step(const Dataset& data, std::span<const std::size_t> indices, double tau,
                              std::uint64_t phase, std::uint64_t iteration, const char* label) {
  const bool train_w = phase == kPhaseW;
  for (auto& w : weights_) {
    w.set_requires_grad(train_w);
    w.zero_grad();
  }
  for (auto& a : arch_) {
    a.set_requires_grad(!train_w);
    a.zero_grad();
  }
  SampleContext ctx;
  ctx.seed = config_.seed;
  ctx.phase = phase;
  ctx.iteration = iteration;
  ctx.tau = tau;
  ctx.mode = config_.effective_mode();
  const auto labels = data.batch_labels(indices);
  const Tensor logits = net_.forward(data.batch_images(indices), ctx);
  const Tensor loss = classification_loss(logits, labels);
  if (!std::isfinite(loss.item())) {
    throw SearchDiverged(iteration, "non-finite " + std::string(label) + " loss at iteration " +
                                        std::to_string(iteration));
  }
  backward(loss);
  return {loss.item(), accuracy(logits, labels)};
}

StepResult SearchEngine::step_W(std::span<const std::size_t> train_indices, double lr, double tau,
                                std::uint64_t iteration) {
  const auto r = step(data_.train, train_indices, tau, kPhaseW, iteration, "training");
  w_opt_.step(lr);
  return r;
}

StepResult SearchEngine::step_A(std::span<const std::size_t> valid_indices, double lr, double tau,
                                std::uint64_t iteration) {
  const auto r = step(data_.valid, valid_indices, tau, kPhaseA, iteration, "validation");
  a_opt_.step(lr);
  return r;
}

SearchResult SearchEngine::run(const std::function<void(const MetricRow&)>& on_row) {
  const std::size_t per_epoch = iterations_per_epoch();
  const std::size_t total = total_iterations();
  const std::size_t last = total > 1 ? total - 1 : 1;
  const TemperatureSchedule schedule{config_.tau_start, config_.tau_end, last};
  const std::uint64_t train_seed = derive_seed(config_.seed, "search_train_batches");
  const std::uint64_t valid_seed = derive_seed(config_.seed, "search_valid_batches");

  SearchResult result;
  std::vector<std::vector<std::size_t>> valid_batches;
  std::size_t valid_pos = 0, valid_round = 0;
  std::size_t iter = 0;
  for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
    auto train_batches = epoch_batches(data_.train.size(), config_.batch_size, train_seed, epoch);
    train_batches.resize(per_epoch, train_batches.front());
    MetricRow tr{epoch, 0, "train"}, va{epoch, 0, "valid"};
    for (std::size_t b = 0; b < per_epoch; ++b, ++iter) {
      if (valid_pos == valid_batches.size()) {
        valid_batches = epoch_batches(data_.valid.size(), config_.batch_size, valid_seed, valid_round++);
        valid_pos = 0;
      }
      const double tau = anneal_tau(schedule, iter);
      const double lr_w = cosine_lr(iter, last, config_.w_lr_max, config_.w_lr_min);
      const auto rw = step_W(train_batches[b], lr_w, tau, iter);
      const auto ra = step_A(valid_batches[valid_pos++], config_.a_lr, tau, iter);
      tr.loss += rw.loss;
      tr.accuracy += rw.accuracy;
      va.loss += ra.loss;
      va.accuracy += ra.accuracy;
      tr.tau = va.tau = tau;
      tr.lr_W = va.lr_W = lr_w;
    }
    for (auto* row : {&tr, &va}) {
      row->iter = iter;
      row->loss /= static_cast<double>(per_epoch);
      row->accuracy /= static_cast<double>(per_epoch);
      row->lr_A = config_.a_lr;
      result.metrics.push_back(*row);
      if (on_row) on_row(*row);
    }
    result.snapshots.push_back(arch_params_to_json(net_.arch(), spec_));
  }
  result.final_arch = arch_params_to_json(net_.arch(), spec_);
  return result;
}

}  // namespace gdas
