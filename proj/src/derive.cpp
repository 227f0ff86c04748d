#include "gdas/derive.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gdas/sampler.hpp"

namespace gdas {

void DerivedCell::validate() const {
  if (B == 0 || T == 0) throw std::invalid_argument("derived cell needs B >= 1 and T >= 1");
  if (nodes.size() != B) {
    throw std::invalid_argument("derived cell lists " + std::to_string(nodes.size()) +
                                " nodes, expected " + std::to_string(B));
  }
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t node = b + SearchSpaceSpec::kCellInputs;
    if (nodes[b].size() != T) {
      throw std::invalid_argument("node " + std::to_string(node) + " has " +
                                  std::to_string(nodes[b].size()) + " inputs, expected " +
                                  std::to_string(T));
    }
    for (const auto& in : nodes[b]) {
      if (in.src >= node) {
        throw std::invalid_argument("node " + std::to_string(node) + " reads from node " +
                                    std::to_string(in.src) + " which does not precede it");
      }
    }
  }
}

std::vector<std::size_t> DerivedCell::orphaned_nodes() const {
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < nodes.size(); ++b) {
    if (std::all_of(nodes[b].begin(), nodes[b].end(),
                    [](const DerivedInput& in) { return in.op == OpKind::zeroize; })) {
      out.push_back(b + SearchSpaceSpec::kCellInputs);
    }
  }
  return out;
}

std::vector<std::size_t> omega_without_zeroize(const SearchSpaceSpec& spec) {
  std::vector<std::size_t> omega;
  for (std::size_t k = 0; k < spec.num_candidates(); ++k) {
    if (spec.candidates[k] != OpKind::zeroize) omega.push_back(k);
  }
  return omega;
}

DerivedCell derive_cell(const std::vector<std::vector<double>>& probabilities,
                        const SearchSpaceSpec& spec, CellType type,
                        std::span<const std::size_t> omega) {
  spec.validate();
  const auto edges = edge_list(spec);
  const std::size_t k = spec.num_candidates();
  if (probabilities.size() != edges.size()) {
    throw std::invalid_argument("derive_cell: expected " + std::to_string(edges.size()) +
                                " edges, got " + std::to_string(probabilities.size()));
  }
  std::vector<std::size_t> all(k);
  std::iota(all.begin(), all.end(), 0);
  if (omega.empty()) omega = all;
  for (auto idx : omega) {
    if (idx >= k) throw std::invalid_argument("derive_cell: omega index out of range");
  }

  DerivedCell cell;
  cell.type = type;
  cell.B = spec.nodes;
  cell.T = spec.retained;
  for (std::size_t i = SearchSpaceSpec::kCellInputs; i < SearchSpaceSpec::kCellInputs + spec.nodes;
       ++i) {
    if (spec.retained > i) {
      throw std::invalid_argument("derive_cell: T=" + std::to_string(spec.retained) +
                                  " exceeds the " + std::to_string(i) + " predecessors of node " +
                                  std::to_string(i));
    }
    struct Candidate {
      std::size_t src;
      double importance;
      std::size_t op_index;
    };
    std::vector<Candidate> incoming;
    for (std::size_t j = 0; j < i; ++j) {
      const auto& p = probabilities[first_edge_of(i) + j];
      if (p.size() != k) throw std::invalid_argument("derive_cell: probability row size mismatch");
      std::size_t best = omega[0];
      for (auto idx : omega) {
        if (p[idx] > p[best] || (p[idx] == p[best] && idx < best)) best = idx;
      }
      incoming.push_back({j, p[best], best});
    }
    // Stable sort keeps lower source indices first among equal importances.
    std::stable_sort(incoming.begin(), incoming.end(),
                     [](const Candidate& a, const Candidate& b) { return a.importance > b.importance; });
    incoming.resize(spec.retained);
    std::sort(incoming.begin(), incoming.end(),
              [](const Candidate& a, const Candidate& b) { return a.src < b.src; });
    std::vector<DerivedInput> node;
    for (const auto& c : incoming) node.push_back({c.src, spec.candidates[c.op_index]});
    cell.nodes.push_back(std::move(node));
  }
  return cell;
}

DerivedCell derive_cell(const Tensor& logits, const SearchSpaceSpec& spec, CellType type,
                        std::span<const std::size_t> omega) {
  if (logits.rank() != 2 || logits.dim(1) != spec.num_candidates()) {
    throw ShapeError("derive_cell: logits " + shape_str(logits.shape()) + " do not match K=" +
                     std::to_string(spec.num_candidates()));
  }
  std::vector<std::vector<double>> probs;
  const std::size_t k = logits.dim(1);
  for (std::size_t e = 0; e < logits.dim(0); ++e) {
    probs.push_back(edge_probabilities(logits.data().subspan(e * k, k)));
  }
  return derive_cell(probs, spec, type, omega);
}

CellFormat parse_cell_format(std::string_view name) {
  if (name == "json") return CellFormat::json;
  if (name == "dot") return CellFormat::dot;
  throw std::invalid_argument("unknown cell format '" + std::string(name) + "'");
}

nlohmann::json cell_to_json(const DerivedCell& cell) {
  nlohmann::json j;
  j["type"] = std::string(cell_type_name(cell.type));
  j["B"] = cell.B;
  j["T"] = cell.T;
  j["nodes"] = nlohmann::json::array();
  for (const auto& node : cell.nodes) {
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& in : node) inputs.push_back({{"src", in.src}, {"op", std::string(op_name(in.op))}});
    j["nodes"].push_back(std::move(inputs));
  }
  return j;
}

DerivedCell cell_from_json(const nlohmann::json& j) {
  try {
    DerivedCell cell;
    const auto type = j.at("type").get<std::string>();
    if (type == "normal") {
      cell.type = CellType::normal;
    } else if (type == "reduction") {
      cell.type = CellType::reduction;
    } else {
      throw std::invalid_argument("cell type must be 'normal' or 'reduction', got '" + type + "'");
    }
    cell.B = j.at("B").get<std::size_t>();
    cell.T = j.at("T").get<std::size_t>();
    for (const auto& node : j.at("nodes")) {
      std::vector<DerivedInput> inputs;
      for (const auto& in : node) {
        inputs.push_back({in.at("src").get<std::size_t>(), require_op(in.at("op").get<std::string>())});
      }
      cell.nodes.push_back(std::move(inputs));
    }
    cell.validate();
    return cell;
  } catch (const nlohmann::json::exception& ex) {
    throw std::invalid_argument(std::string("malformed cell: ") + ex.what());
  }
}

namespace {

std::string dot_node_label(std::size_t node, std::size_t b) {
  if (node == 0) return "c_{k-2}";
  if (node == 1) return "c_{k-1}";
  if (node == b + SearchSpaceSpec::kCellInputs) return "output";
  return std::to_string(node - SearchSpaceSpec::kCellInputs);
}

}  // namespace

std::string export_cell(const DerivedCell& cell, CellFormat format) {
  if (format == CellFormat::json) return cell_to_json(cell).dump(2) + "\n";
  std::ostringstream os;
  const std::size_t total = cell.B + SearchSpaceSpec::kCellInputs + 1;
  os << "digraph " << cell_type_name(cell.type) << "_cell {\n";
  os << "  rankdir=LR;\n";
  for (std::size_t n = 0; n < total; ++n) {
    const char* shape = n < SearchSpaceSpec::kCellInputs || n + 1 == total ? "box" : "ellipse";
    os << "  n" << n << " [label=\"" << dot_node_label(n, cell.B) << "\", shape=" << shape
       << "];\n";
  }
  for (std::size_t b = 0; b < cell.nodes.size(); ++b) {
    for (const auto& in : cell.nodes[b]) {
      os << "  n" << in.src << " -> n" << b + SearchSpaceSpec::kCellInputs << " [label=\""
         << op_name(in.op) << "\"];\n";
    }
  }
  for (std::size_t b = 0; b < cell.B; ++b) {
    os << "  n" << b + SearchSpaceSpec::kCellInputs << " -> n" << total - 1
       << " [style=dashed];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace gdas
