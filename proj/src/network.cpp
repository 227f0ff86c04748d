#include "gdas/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gdas/ops.hpp"
#include "gdas/rng.hpp"

namespace gdas {

void NetworkPlan::validate() const {
  if (C == 0 || N == 0 || image_channels == 0 || num_classes < 2) {
    throw std::invalid_argument("network plan needs C, N, image channels >= 1 and >= 2 classes");
  }
}

FixedReductionCell::FixedReductionCell(std::size_t in_channels, std::size_t out_channels,
                                       bool affine, Rng& rng)
    : in_(in_channels),
      out_(out_channels),
      row_conv_(in_channels, in_channels, 1, 3, ops::Conv2dAttrs{1, 2, 0, 1, 1, 1, 1}, affine, rng),
      col_conv_(in_channels, in_channels, 3, 1, ops::Conv2dAttrs{2, 1, 1, 0, 1, 1, 1}, affine, rng),
      merge_(2 * in_channels, out_channels, 1, 1, ops::Conv2dAttrs{}, affine, rng) {}

Tensor FixedReductionCell::apply(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != in_) {
    throw ShapeError("fixed reduction cell: expected " + std::to_string(in_) +
                     " input channels, got " + shape_str(x.shape()));
  }
  const Tensor branches[] = {col_conv_.apply(row_conv_.apply(x)),
                             ops::max_pool2d(x, ops::Pool2dAttrs{3, 2, 1})};
  return merge_.apply(ops::concat_channels(branches));
}

Tensor FixedReductionCell::forward(const Tensor&, const Tensor& prev, const EdgeSelection*,
                                   SelectionMode, OpCounter&) const {
  return apply(prev);
}

std::vector<Tensor> FixedReductionCell::weights() const {
  std::vector<Tensor> out;
  row_conv_.collect(out);
  col_conv_.collect(out);
  merge_.collect(out);
  return out;
}

DerivedCellModule::DerivedCellModule(const DerivedCell& cell, const CellChannels& channels,
                                     bool affine, Rng& rng)
    : cell_(cell),
      channels_(channels),
      pre1_(channels.prev, channels.node, 1, 1, ops::Conv2dAttrs{}, affine, rng) {
  cell_.validate();
  if (channels.reduction_prev) {
    pre0_reduce_.emplace(channels.prev_prev, channels.node, affine, rng);
  } else {
    pre0_conv_.emplace(channels.prev_prev, channels.node, 1, 1, ops::Conv2dAttrs{}, affine, rng);
  }
  for (const auto& node : cell_.nodes) {
    std::vector<OpInstance> row;
    for (const auto& in : node) {
      const std::size_t stride =
          (channels.reduction && in.src < SearchSpaceSpec::kCellInputs) ? 2 : 1;
      row.emplace_back(in.op, channels.node, channels.node, stride, affine, rng);
    }
    ops_.push_back(std::move(row));
  }
}

Tensor DerivedCellModule::forward(const Tensor& prev_prev, const Tensor& prev,
                                  const EdgeSelection*, SelectionMode, OpCounter& counter) const {
  std::vector<Tensor> nodes;
  nodes.push_back(pre0_reduce_ ? pre0_reduce_->apply(prev_prev) : pre0_conv_->apply(prev_prev));
  nodes.push_back(pre1_.apply(prev));
  for (std::size_t b = 0; b < cell_.nodes.size(); ++b) {
    Tensor acc;
    for (std::size_t t = 0; t < cell_.nodes[b].size(); ++t) {
      ++counter.evaluations;
      Tensor term = ops_[b][t].apply(nodes[cell_.nodes[b][t].src]);
      acc = acc.defined() ? ops::add(acc, term) : term;
    }
    nodes.push_back(acc);
  }
  return ops::concat_channels(std::span<const Tensor>(nodes).subspan(SearchSpaceSpec::kCellInputs));
}

std::vector<Tensor> DerivedCellModule::weights() const {
  std::vector<Tensor> out;
  if (pre0_conv_) pre0_conv_->collect(out);
  if (pre0_reduce_) pre0_reduce_->collect(out);
  pre1_.collect(out);
  for (const auto& row : ops_) {
    for (const auto& op : row) {
      for (auto& w : op.weights()) out.push_back(w);
    }
  }
  return out;
}

ArchParams& Network::arch() {
  if (!arch_) throw std::logic_error("network has no architecture parameters");
  return *arch_;
}

const ArchParams& Network::arch() const {
  if (!arch_) throw std::logic_error("network has no architecture parameters");
  return *arch_;
}

std::size_t Network::searchable_cell_count() const {
  std::size_t n = 0;
  for (const auto& c : cells_) n += c->searchable() ? 1 : 0;
  return n;
}

std::vector<Tensor> Network::weights() const {
  std::vector<Tensor> out{stem_weight_};
  stem_norm_->collect(out);
  for (const auto& c : cells_) {
    for (auto& w : c->weights()) out.push_back(w);
  }
  out.push_back(classifier_weight_);
  out.push_back(classifier_bias_);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights()) n += w.numel();
  return n;
}

Tensor Network::forward(const Tensor& images, const SampleContext& ctx) {
  if (images.rank() != 4 || images.dim(1) != plan_.image_channels) {
    throw ShapeError("network: expected images [N," + std::to_string(plan_.image_channels) +
                     ",H,W], got " + shape_str(images.shape()));
  }
  last_selections_.clear();
  last_selection_types_.clear();
  last_cell_shapes_.clear();
  const Tensor stem =
      stem_norm_->apply(ops::conv2d(images, stem_weight_, ops::Conv2dAttrs::square(1, 1)));
  Tensor prev_prev = stem, prev = stem;
  std::size_t searchable_index = 0;
  for (std::size_t ci = 0; ci < cells_.size(); ++ci) {
    const auto& cell = *cells_[ci];
    const EdgeSelection* selection = nullptr;
    if (cell.searchable()) {
      const CellType type = cell.reduction() ? CellType::reduction : CellType::normal;
      if (ctx.fixed_selections) {
        if (searchable_index >= ctx.fixed_selections->size()) {
          throw std::invalid_argument("network: too few fixed selections");
        }
        last_selections_.push_back((*ctx.fixed_selections)[searchable_index]);
      } else {
        const Tensor& logits = arch_->of(type);
        std::vector<double> noise;
        noise.reserve(logits.numel());
        const std::size_t k = logits.dim(1);
        for (std::size_t e = 0; e < logits.dim(0); ++e) {
          auto draw = gumbel_noise({ctx.seed, ctx.phase, ctx.iteration, ci, e}, k);
          noise.insert(noise.end(), draw.begin(), draw.end());
        }
        last_selections_.push_back(select_edges(logits, noise, ctx.tau, ctx.mode));
      }
      last_selection_types_.push_back(type);
      selection = &last_selections_.back();
      ++searchable_index;
    }
    Tensor out;
    try {
      out = cell.forward(prev_prev, prev, selection, ctx.mode, counter_);
    } catch (const ShapeError& ex) {
      throw ShapeError("cell " + std::to_string(ci) + ": " + ex.what());
    }
    last_cell_shapes_.push_back(out.shape());
    prev_prev = prev;
    prev = out;
  }
  return ops::affine(ops::global_avg_pool(prev), classifier_weight_, classifier_bias_);
}

void Network::stack(const NetworkPlan& plan, Rng& rng, bool affine, const CellFactory& make_cell) {
  plan.validate();
  plan_ = plan;
  stem_weight_ = init_conv_weight(plan.C, plan.image_channels, 3, 3, rng);
  stem_norm_.emplace(plan.C, affine);
  std::size_t c_prev_prev = plan.C, c_prev = plan.C, c_node = plan.C;
  bool reduction_prev = false;
  for (std::size_t i = 0; i < plan.cell_count(); ++i) {
    const bool reduction = plan.is_reduction(i);
    if (reduction) c_node *= 2;
    cells_.push_back(make_cell(i, CellChannels{c_prev_prev, c_prev, c_node, reduction, reduction_prev}));
    c_prev_prev = c_prev;
    c_prev = cells_.back()->out_channels();
    reduction_prev = reduction;
  }
  const double bound = std::sqrt(1.0 / static_cast<double>(c_prev));
  std::vector<double> w(plan.num_classes * c_prev), b(plan.num_classes);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  for (auto& v : b) v = rng.uniform(-bound, bound);
  classifier_weight_ = Tensor::from({plan.num_classes, c_prev}, std::move(w), true);
  classifier_bias_ = Tensor::from({plan.num_classes}, std::move(b), true);
}

Network build_search_network(const SearchSpaceSpec& spec, const NetworkPlan& plan,
                             bool fixed_reduction, std::uint64_t seed) {
  spec.validate();
  Network net;
  net.space_ = spec;
  Rng rng(derive_seed(seed, "supernet_weights"));
  net.stack(plan, rng, false,
              [&](std::size_t, const CellChannels& ch) -> std::unique_ptr<CellModule> {
                if (ch.reduction && fixed_reduction) {
                  return std::make_unique<FixedReductionCell>(ch.prev, spec.nodes * ch.node, false,
                                                              rng);
                }
                return std::make_unique<SearchCell>(spec, ch, rng);
              });
  net.arch_ = ArchParams::init(spec, !fixed_reduction, seed);
  return net;
}

Network build_network(const DerivedCell& normal, const std::optional<DerivedCell>& reduction,
                      const NetworkPlan& plan, std::uint64_t seed, bool affine) {
  normal.validate();
  if (reduction) reduction->validate();
  Network net;
  Rng rng(derive_seed(seed, "network_weights"));
  net.stack(plan, rng, affine,
              [&](std::size_t index, const CellChannels& ch) -> std::unique_ptr<CellModule> {
                try {
                  if (ch.reduction) {
                    if (!reduction) {
                      return std::make_unique<FixedReductionCell>(ch.prev, normal.B * ch.node,
                                                                  affine, rng);
                    }
                    if (reduction->B != normal.B) {
                      // Cell outputs would disagree in channel count.
                      throw ShapeError("cell " + std::to_string(index) + ": reduction cell has B=" +
                                       std::to_string(reduction->B) + " but normal cell has B=" +
                                       std::to_string(normal.B));
                    }
                    DerivedCell r = *reduction;
                    r.type = CellType::reduction;
                    return std::make_unique<DerivedCellModule>(r, ch, affine, rng);
                  }
                  return std::make_unique<DerivedCellModule>(normal, ch, affine, rng);
                } catch (const std::invalid_argument& ex) {
                  throw ShapeError("cell " + std::to_string(index) + ": " + ex.what());
                }
              });
  return net;
}

}  // namespace gdas
