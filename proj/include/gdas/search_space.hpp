#pragma once

// DAG cell bookkeeping and the supernet cell.
//
// Node numbering is zero-based: nodes 0 and 1 are the two cell inputs,
// nodes 2..B+1 are computational, node B+2 is the concatenated output.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "gdas/candidate_ops.hpp"
#include "gdas/sampler.hpp"
#include "gdas/tensor.hpp"

namespace gdas {

struct SearchSpaceSpec {
  std::size_t nodes = 4;  // B computational nodes
  std::vector<OpKind> candidates = default_candidates();
  std::size_t retained = 2;  // T inputs kept per node after derivation
  static constexpr std::size_t kCellInputs = 2;

  std::size_t num_candidates() const { return candidates.size(); }
  std::size_t total_nodes() const { return nodes + kCellInputs + 1; }
  // Predecessor count of computational node `node` (zero-based global index).
  std::size_t predecessors(std::size_t node) const { return node; }
  // Throws std::invalid_argument on an empty or malformed spec.
  void validate() const;
  // Index of the candidate in this spec, if present.
  std::optional<std::size_t> candidate_index(OpKind kind) const;
};

struct Edge {
  std::size_t to;
  std::size_t from;
  friend bool operator==(const Edge&, const Edge&) = default;
};

// Edges (i, j) with j < i, lexicographic by (i, j).
std::vector<Edge> edge_list(const SearchSpaceSpec& spec);
// Offset of node `to`'s first incoming edge in edge_list order.
std::size_t first_edge_of(std::size_t to);

// Distinct derived cells: prod_i C(p_i, T) * K^T. Throws std::invalid_argument
// if T exceeds some node's predecessor count, std::overflow_error past 2^64.
std::uint64_t count_subgraphs(const SearchSpaceSpec& spec);

enum class CellType { normal, reduction };
std::string_view cell_type_name(CellType type);

// Learnable logits, one [E,K] tensor per searched cell type. The reduction
// entry is absent when the reduction cell is fixed.
struct ArchParams {
  Tensor normal;
  Tensor reduction;

  static ArchParams init(const SearchSpaceSpec& spec, bool search_reduction, std::uint64_t seed,
                         double init_scale = 1e-3);
  bool has_reduction() const { return reduction.defined(); }
  const Tensor& of(CellType type) const;
  std::vector<Tensor> tensors() const;
  std::size_t parameter_count() const;
  // Row-wise softmax per searched cell type.
  std::vector<std::vector<double>> probabilities(CellType type) const;
};

nlohmann::json arch_params_to_json(const ArchParams& params, const SearchSpaceSpec& spec);
// Throws std::invalid_argument on schema violations.
ArchParams arch_params_from_json(const nlohmann::json& j, SearchSpaceSpec* spec_out = nullptr);

// Counts candidate-op evaluations.
struct OpCounter {
  std::uint64_t evaluations = 0;
};

struct CellChannels {
  std::size_t prev_prev;
  std::size_t prev;
  std::size_t node;  // channels of every DAG node inside the cell
  bool reduction = false;
  bool reduction_prev = false;
};

// Common interface of every cell stacked into a network.
class CellModule {
 public:
  virtual ~CellModule() = default;
  // `selection` is required only by searchable cells.
  virtual Tensor forward(const Tensor& prev_prev, const Tensor& prev,
                         const EdgeSelection* selection, SelectionMode mode,
                         OpCounter& counter) const = 0;
  virtual std::vector<Tensor> weights() const = 0;
  virtual bool searchable() const { return false; }
  virtual bool reduction() const = 0;
  virtual std::size_t out_channels() const = 0;
};

// Supernet cell: every edge carries all K candidate ops with private weights.
class SearchCell final : public CellModule {
 public:
  SearchCell(const SearchSpaceSpec& spec, const CellChannels& channels, Rng& rng);

  Tensor forward(const Tensor& prev_prev, const Tensor& prev, const EdgeSelection* selection,
                 SelectionMode mode, OpCounter& counter) const override;
  // DAG evaluation on already-preprocessed inputs.
  Tensor forward_nodes(const Tensor& in0, const Tensor& in1, const EdgeSelection& selection,
                       SelectionMode mode, OpCounter& counter) const;

  std::vector<Tensor> weights() const override;
  bool searchable() const override { return true; }
  bool reduction() const override { return channels_.reduction; }
  std::size_t out_channels() const override { return spec_.nodes * channels_.node; }

  const SearchSpaceSpec& spec() const { return spec_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const OpInstance& op(std::size_t edge, std::size_t candidate) const;
  std::size_t edge_stride(const Edge& e) const;

 private:
  SearchSpaceSpec spec_;
  CellChannels channels_;
  std::vector<Edge> edges_;
  std::optional<ReluConvBn> pre0_conv_;
  std::optional<FactorizedReduce> pre0_reduce_;
  ReluConvBn pre1_;
  std::vector<OpInstance> ops_;  // edge-major, K per edge
};

}  // namespace gdas
