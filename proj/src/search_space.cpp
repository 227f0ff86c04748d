#include "gdas/search_space.hpp"

#include <limits>
#include <stdexcept>
#include <string>

#include "gdas/ops.hpp"
#include "gdas/rng.hpp"

namespace gdas {

void SearchSpaceSpec::validate() const {
  if (nodes == 0) throw std::invalid_argument("search space needs at least one computational node");
  if (retained == 0) throw std::invalid_argument("retained inputs per node must be positive");
  validate_candidate_set(candidates);
}

std::optional<std::size_t> SearchSpaceSpec::candidate_index(OpKind kind) const {
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (candidates[k] == kind) return k;
  }
  return std::nullopt;
}

std::vector<Edge> edge_list(const SearchSpaceSpec& spec) {
  std::vector<Edge> edges;
  for (std::size_t i = SearchSpaceSpec::kCellInputs; i < SearchSpaceSpec::kCellInputs + spec.nodes;
       ++i) {
    for (std::size_t j = 0; j < i; ++j) edges.push_back({i, j});
  }
  return edges;
}

std::size_t first_edge_of(std::size_t to) {
  // Node i has i predecessors; nodes before it contribute 2 + 3 + ... + (i-1).
  const std::size_t base = SearchSpaceSpec::kCellInputs;
  return (to * (to - 1)) / 2 - (base * (base - 1)) / 2;
}

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    throw std::overflow_error("subgraph count exceeds 64 bits");
  }
  return a * b;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = checked_mul(r, n - k + i) / i;
  return r;
}

}  // namespace

std::uint64_t count_subgraphs(const SearchSpaceSpec& spec) {
  spec.validate();
  std::uint64_t total = 1;
  std::uint64_t per_node_ops = 1;
  for (std::size_t t = 0; t < spec.retained; ++t) per_node_ops = checked_mul(per_node_ops, spec.num_candidates());
  for (std::size_t i = SearchSpaceSpec::kCellInputs; i < SearchSpaceSpec::kCellInputs + spec.nodes;
       ++i) {
    const std::size_t p = spec.predecessors(i);
    if (spec.retained > p) {
      throw std::invalid_argument("T=" + std::to_string(spec.retained) + " exceeds the " +
                                  std::to_string(p) + " predecessors of node " + std::to_string(i));
    }
    total = checked_mul(total, checked_mul(binomial(p, spec.retained), per_node_ops));
  }
  return total;
}

std::string_view cell_type_name(CellType type) {
  return type == CellType::normal ? "normal" : "reduction";
}

ArchParams ArchParams::init(const SearchSpaceSpec& spec, bool search_reduction, std::uint64_t seed,
                            double init_scale) {
  const std::size_t e = edge_list(spec).size(), k = spec.num_candidates();
  Rng rng(derive_seed(seed, "arch_params"));
  auto make = [&] {
    std::vector<double> v(e * k);
    for (auto& x : v) x = init_scale * rng.normal();
    return Tensor::from({e, k}, std::move(v), true);
  };
  ArchParams params;
  params.normal = make();
  if (search_reduction) params.reduction = make();
  return params;
}

const Tensor& ArchParams::of(CellType type) const {
  if (type == CellType::reduction) {
    if (!reduction.defined()) throw std::logic_error("reduction cell is not searched");
    return reduction;
  }
  return normal;
}

std::vector<Tensor> ArchParams::tensors() const {
  std::vector<Tensor> out{normal};
  if (reduction.defined()) out.push_back(reduction);
  return out;
}

std::size_t ArchParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.numel();
  return n;
}

std::vector<std::vector<double>> ArchParams::probabilities(CellType type) const {
  const Tensor& t = of(type);
  const std::size_t e = t.dim(0), k = t.dim(1);
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < e; ++i) out.push_back(edge_probabilities(t.data().subspan(i * k, k)));
  return out;
}

nlohmann::json arch_params_to_json(const ArchParams& params, const SearchSpaceSpec& spec) {
  nlohmann::json j;
  j["B"] = spec.nodes;
  j["T"] = spec.retained;
  j["candidates"] = nlohmann::json::array();
  for (auto op : spec.candidates) j["candidates"].push_back(std::string(op_name(op)));
  j["edges"] = nlohmann::json::array();
  for (const auto& e : edge_list(spec)) j["edges"].push_back({e.to, e.from});
  auto rows = [&](const Tensor& t) {
    nlohmann::json m = nlohmann::json::array();
    const std::size_t k = t.dim(1);
    for (std::size_t i = 0; i < t.dim(0); ++i) {
      m.push_back(std::vector<double>(t.data().begin() + static_cast<long>(i * k),
                                      t.data().begin() + static_cast<long>((i + 1) * k)));
    }
    return m;
  };
  j["normal"] = rows(params.normal);
  if (params.has_reduction()) j["reduction"] = rows(params.reduction);
  return j;
}

ArchParams arch_params_from_json(const nlohmann::json& j, SearchSpaceSpec* spec_out) {
  try {
    SearchSpaceSpec spec;
    spec.nodes = j.at("B").get<std::size_t>();
    spec.retained = j.at("T").get<std::size_t>();
    spec.candidates.clear();
    for (const auto& name : j.at("candidates")) spec.candidates.push_back(require_op(name.get<std::string>()));
    spec.validate();
    const std::size_t e = edge_list(spec).size(), k = spec.num_candidates();
    auto read = [&](const nlohmann::json& m, const char* field) {
      if (!m.is_array() || m.size() != e) {
        throw std::invalid_argument(std::string("arch params field '") + field + "' must have " +
                                    std::to_string(e) + " rows");
      }
      std::vector<double> v;
      for (const auto& row : m) {
        if (!row.is_array() || row.size() != k) {
          throw std::invalid_argument(std::string("arch params field '") + field +
                                      "' rows must have " + std::to_string(k) + " entries");
        }
        for (const auto& x : row) v.push_back(x.get<double>());
      }
      return Tensor::from({e, k}, std::move(v), true);
    };
    ArchParams params;
    params.normal = read(j.at("normal"), "normal");
    if (j.contains("reduction")) params.reduction = read(j.at("reduction"), "reduction");
    if (spec_out) *spec_out = spec;
    return params;
  } catch (const nlohmann::json::exception& ex) {
    throw std::invalid_argument(std::string("malformed arch params: ") + ex.what());
  }
}

SearchCell::SearchCell(const SearchSpaceSpec& spec, const CellChannels& channels, Rng& rng)
    : spec_(spec),
      channels_(channels),
      edges_(edge_list(spec)),
      pre1_(channels.prev, channels.node, 1, 1, ops::Conv2dAttrs{}, false, rng) {
  spec_.validate();
  if (channels.reduction_prev) {
    pre0_reduce_.emplace(channels.prev_prev, channels.node, false, rng);
  } else {
    pre0_conv_.emplace(channels.prev_prev, channels.node, 1, 1, ops::Conv2dAttrs{}, false, rng);
  }
  ops_.reserve(edges_.size() * spec_.num_candidates());
  for (const auto& e : edges_) {
    for (auto kind : spec_.candidates) {
      ops_.emplace_back(kind, channels.node, channels.node, edge_stride(e), false, rng);
    }
  }
}

std::size_t SearchCell::edge_stride(const Edge& e) const {
  return (channels_.reduction && e.from < SearchSpaceSpec::kCellInputs) ? 2 : 1;
}

const OpInstance& SearchCell::op(std::size_t edge, std::size_t candidate) const {
  return ops_.at(edge * spec_.num_candidates() + candidate);
}

Tensor SearchCell::forward(const Tensor& prev_prev, const Tensor& prev,
                           const EdgeSelection* selection, SelectionMode mode,
                           OpCounter& counter) const {
  if (!selection) throw std::invalid_argument("search cell forward requires an edge selection");
  const Tensor in0 = pre0_reduce_ ? pre0_reduce_->apply(prev_prev) : pre0_conv_->apply(prev_prev);
  const Tensor in1 = pre1_.apply(prev);
  return forward_nodes(in0, in1, *selection, mode, counter);
}

Tensor SearchCell::forward_nodes(const Tensor& in0, const Tensor& in1,
                                 const EdgeSelection& selection, SelectionMode mode,
                                 OpCounter& counter) const {
  const std::size_t k = spec_.num_candidates();
  if (!selection.weights.defined() || selection.weights.numel() != edges_.size() * k ||
      selection.argmax.size() != edges_.size()) {
    throw ShapeError("cell forward: selection does not match " + std::to_string(edges_.size()) +
                     " edges x " + std::to_string(k) + " candidates");
  }
  if (in0.shape() != in1.shape()) {
    throw ShapeError("cell forward: preprocessed inputs differ " + shape_str(in0.shape()) + " vs " +
                     shape_str(in1.shape()));
  }
  std::vector<Tensor> nodes{in0, in1};
  std::size_t e = 0;
  for (std::size_t i = SearchSpaceSpec::kCellInputs; i < SearchSpaceSpec::kCellInputs + spec_.nodes;
       ++i) {
    Tensor acc;
    auto accumulate = [&acc](Tensor term) { acc = acc.defined() ? ops::add(acc, term) : term; };
    for (std::size_t j = 0; j < i; ++j, ++e) {
      const Tensor& source = nodes[j];
      switch (mode) {
        case SelectionMode::accelerated: {
          const std::size_t chosen = selection.argmax[e];
          ++counter.evaluations;
          accumulate(ops::scale_by(op(e, chosen).apply(source), selection.weights, e * k + chosen));
          break;
        }
        case SelectionMode::hard_sampled:
        case SelectionMode::relaxed:
          for (std::size_t c = 0; c < k; ++c) {
            ++counter.evaluations;
            accumulate(ops::scale_by(op(e, c).apply(source), selection.weights, e * k + c));
          }
          break;
        default:
          throw std::invalid_argument("cell forward: unknown selection mode");
      }
    }
    nodes.push_back(acc);
  }
  return ops::concat_channels(std::span<const Tensor>(nodes).subspan(SearchSpaceSpec::kCellInputs));
}

std::vector<Tensor> SearchCell::weights() const {
  std::vector<Tensor> out;
  if (pre0_conv_) pre0_conv_->collect(out);
  if (pre0_reduce_) pre0_reduce_->collect(out);
  pre1_.collect(out);
  for (const auto& o : ops_) {
    for (auto& w : o.weights()) out.push_back(w);
  }
  return out;
}

}  // namespace gdas
