#pragma once

// Exhaustive ground truth on tiny search spaces.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "gdas/dataset.hpp"
#include "gdas/derive.hpp"
#include "gdas/network.hpp"
#include "gdas/trainer.hpp"

namespace gdas {

// Every derivable cell of `type`, in lexicographic order of the per-node
// (source subset, op tuple) choices. Throws std::length_error when
// count_subgraphs(spec) exceeds `cap`.
std::vector<DerivedCell> enumerate_cells(const SearchSpaceSpec& spec, CellType type,
                                         std::uint64_t cap = 10000);

struct OracleBudget {
  TrainConfig train;
  NetworkPlan plan;
  // Seed for network initialization; identical for every cell.
  std::uint64_t init_seed = 0;
  std::size_t workers = 1;
};

struct RankedCell {
  std::size_t cell_id = 0;  // index into the enumeration
  DerivedCell cell;
  double val_loss = 0.0;
  double val_acc = 0.0;
  bool diverged = false;
  std::size_t rank = 0;  // 1-based
};

struct EnumerationResult {
  // Sorted ascending by validation loss; diverged cells last.
  std::vector<RankedCell> ranking;
  // 1-based rank of the entry with the given cell_id.
  std::size_t rank_of_id(std::size_t cell_id) const;
  // 1-based rank of the first entry equal to `cell`; 0 when absent.
  std::size_t rank_of(const DerivedCell& cell) const;
};

// Trains every cell (normal cell; reduction fixed) on data.train for the
// budget and evaluates on data.valid. Cells are independent and are spread
// over `budget.workers` threads; results do not depend on the worker count.
EnumerationResult rank_all(const std::vector<DerivedCell>& cells, const SplitDataset& data,
                           const OracleBudget& budget,
                           const std::function<void(std::size_t done, std::size_t total)>& progress = {});

void write_ranking_csv(std::ostream& os, const EnumerationResult& result);

struct MarginalReport {
  std::vector<double> expected;  // softmax(A)
  std::vector<std::size_t> counts;
  double chi_square = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};

// Draws `draws` Gumbel-Max samples from logits (noise keyed by seed) and tests
// the frequencies against softmax(logits). Bins with expected count < 5 are
// pooled; a pool still below 5 joins the smallest other bin. Fewer than two
// bins gives dof 0 and p 1.
MarginalReport validate_marginals(std::span<const double> logits, std::size_t draws,
                                  std::uint64_t seed);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace gdas
