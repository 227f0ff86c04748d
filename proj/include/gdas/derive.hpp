#pragma once

// Discrete cells derived from learned architecture logits, and their
// JSON / Graphviz renderings.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gdas/candidate_ops.hpp"
#include "gdas/search_space.hpp"

namespace gdas {

struct DerivedInput {
  std::size_t src;
  OpKind op;
  friend bool operator==(const DerivedInput&, const DerivedInput&) = default;
};

struct DerivedCell {
  CellType type = CellType::normal;
  std::size_t B = 0;
  std::size_t T = 0;
  // nodes[b] holds the T retained inputs of computational node b + 2,
  // ordered by source index.
  std::vector<std::vector<DerivedInput>> nodes;

  // Throws std::invalid_argument when a node has the wrong arity or a source
  // does not strictly precede its node.
  void validate() const;
  // Computational nodes (global index) whose retained ops are all zeroize.
  std::vector<std::size_t> orphaned_nodes() const;
  friend bool operator==(const DerivedCell&, const DerivedCell&) = default;
};

// Retains, per node, the T incoming edges with the largest importance
// max_{k in omega} p_k and labels each with argmax_{k in omega} p_k.
// Ties prefer the lower source index, then the lower candidate index.
// `omega` lists candidate indices; empty means all candidates.
DerivedCell derive_cell(const Tensor& logits, const SearchSpaceSpec& spec, CellType type,
                        std::span<const std::size_t> omega = {});
DerivedCell derive_cell(const std::vector<std::vector<double>>& probabilities,
                        const SearchSpaceSpec& spec, CellType type,
                        std::span<const std::size_t> omega = {});
// Omega without zeroize (all candidates when zeroize is absent).
std::vector<std::size_t> omega_without_zeroize(const SearchSpaceSpec& spec);

enum class CellFormat { json, dot };
// Throws std::invalid_argument for unknown names.
CellFormat parse_cell_format(std::string_view name);

nlohmann::json cell_to_json(const DerivedCell& cell);
// Throws std::invalid_argument on malformed documents.
DerivedCell cell_from_json(const nlohmann::json& j);
std::string export_cell(const DerivedCell& cell, CellFormat format);

}  // namespace gdas
