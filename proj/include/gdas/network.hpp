#pragma once

// Cell stacking: a 3x3 conv head, three blocks of N normal cells with a
// reduction cell between consecutive blocks, then global average pooling and
// an affine classifier. Every cell reads the outputs of the two cells before it.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "gdas/candidate_ops.hpp"
#include "gdas/derive.hpp"
#include "gdas/sampler.hpp"
#include "gdas/search_space.hpp"

namespace gdas {

struct NetworkPlan {
  std::size_t C = 4;  // initial channels
  std::size_t N = 1;  // normal cells per block
  std::size_t image_channels = 1;
  std::size_t num_classes = 4;
  static constexpr std::size_t kBlocks = 3;

  std::size_t cell_count() const { return kBlocks * N + (kBlocks - 1); }
  bool is_reduction(std::size_t cell_index) const {
    return cell_index == N || cell_index == 2 * N + 1;
  }
  void validate() const;
};

// Hand-designed reduction: (1x3 conv stride (1,2) -> 3x1 conv stride (2,1))
// in parallel with 3x3 max pool stride 2, concatenated, then a 1x1 conv.
class FixedReductionCell final : public CellModule {
 public:
  FixedReductionCell(std::size_t in_channels, std::size_t out_channels, bool affine, Rng& rng);

  Tensor forward(const Tensor& prev_prev, const Tensor& prev, const EdgeSelection* selection,
                 SelectionMode mode, OpCounter& counter) const override;
  // Applies the block to a single input.
  Tensor apply(const Tensor& x) const;
  std::vector<Tensor> weights() const override;
  bool reduction() const override { return true; }
  std::size_t out_channels() const override { return out_; }

 private:
  std::size_t in_;
  std::size_t out_;
  ReluConvBn row_conv_;
  ReluConvBn col_conv_;
  ReluConvBn merge_;
};

// Discrete cell: each node sums the T retained (source, op) transformations.
class DerivedCellModule final : public CellModule {
 public:
  DerivedCellModule(const DerivedCell& cell, const CellChannels& channels, bool affine, Rng& rng);

  Tensor forward(const Tensor& prev_prev, const Tensor& prev, const EdgeSelection* selection,
                 SelectionMode mode, OpCounter& counter) const override;
  std::vector<Tensor> weights() const override;
  bool reduction() const override { return channels_.reduction; }
  std::size_t out_channels() const override { return cell_.B * channels_.node; }

 private:
  DerivedCell cell_;
  CellChannels channels_;
  std::optional<ReluConvBn> pre0_conv_;
  std::optional<FactorizedReduce> pre0_reduce_;
  ReluConvBn pre1_;
  std::vector<std::vector<OpInstance>> ops_;
};

// How a forward pass samples searchable cells.
struct SampleContext {
  std::uint64_t seed = 0;
  std::uint64_t phase = 0;
  std::uint64_t iteration = 0;
  double tau = 1.0;
  SelectionMode mode = SelectionMode::hard_sampled;
  // When set, these per-cell selections are used instead of fresh samples
  // (one entry per searchable cell, in network order).
  const std::vector<EdgeSelection>* fixed_selections = nullptr;
};

class Network {
 public:
  Network() = default;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  // Logits [batch, classes].
  Tensor forward(const Tensor& images, const SampleContext& ctx = {});

  std::vector<Tensor> weights() const;
  std::size_t parameter_count() const;

  bool searchable() const { return arch_.has_value(); }
  ArchParams& arch();
  const ArchParams& arch() const;
  const SearchSpaceSpec& search_space() const { return space_; }

  const std::vector<std::unique_ptr<CellModule>>& cells() const { return cells_; }
  std::size_t searchable_cell_count() const;
  // Selections drawn during the most recent forward pass, per searchable cell.
  const std::vector<EdgeSelection>& last_selections() const { return last_selections_; }
  const std::vector<CellType>& last_selection_types() const { return last_selection_types_; }
  // Output shape of every cell during the most recent forward pass.
  const std::vector<Shape>& last_cell_shapes() const { return last_cell_shapes_; }
  OpCounter& counter() { return counter_; }

 private:
  friend Network build_search_network(const SearchSpaceSpec&, const NetworkPlan&, bool,
                                      std::uint64_t);
  friend Network build_network(const DerivedCell&, const std::optional<DerivedCell>&,
                               const NetworkPlan&, std::uint64_t, bool);

  using CellFactory =
      std::function<std::unique_ptr<CellModule>(std::size_t index, const CellChannels& channels)>;
  void stack(const NetworkPlan& plan, Rng& rng, bool affine, const CellFactory& make_cell);

  NetworkPlan plan_;
  SearchSpaceSpec space_;
  Tensor stem_weight_;
  std::optional<Norm> stem_norm_;
  std::vector<std::unique_ptr<CellModule>> cells_;
  Tensor classifier_weight_;
  Tensor classifier_bias_;
  std::optional<ArchParams> arch_;
  std::vector<EdgeSelection> last_selections_;
  std::vector<CellType> last_selection_types_;
  std::vector<Shape> last_cell_shapes_;
  OpCounter counter_;
};

// Supernet for search. With fixed_reduction the reduction positions hold
// FixedReductionCell and the arch params carry no reduction entry.
Network build_search_network(const SearchSpaceSpec& spec, const NetworkPlan& plan,
                             bool fixed_reduction, std::uint64_t seed);

// Trainable network from derived cells; reduction == nullopt selects the
// fixed reduction cell. Throws ShapeError naming the cell index on
// inconsistent cells.
Network build_network(const DerivedCell& normal, const std::optional<DerivedCell>& reduction,
                      const NetworkPlan& plan, std::uint64_t seed, bool affine = true);

}  // namespace gdas
