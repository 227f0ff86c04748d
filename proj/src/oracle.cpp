#include "gdas/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <boost/math/special_functions/gamma.hpp>

#include "gdas/sampler.hpp"

namespace gdas {

namespace {

// All T-subsets of {0..p-1}, lexicographic.
std::vector<std::vector<std::size_t>> subsets(std::size_t p, std::size_t t) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur(t);
  std::iota(cur.begin(), cur.end(), 0);
  while (true) {
    out.push_back(cur);
    std::size_t i = t;
    while (i > 0 && cur[i - 1] == p - t + (i - 1)) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < t; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

std::vector<std::vector<DerivedInput>> node_choices(const SearchSpaceSpec& spec, std::size_t node) {
  const std::size_t k = spec.num_candidates(), t = spec.retained;
  std::vector<std::vector<DerivedInput>> out;
  for (const auto& srcs : subsets(node, t)) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < t; ++i) combos *= k;
    for (std::size_t c = 0; c < combos; ++c) {
      std::vector<DerivedInput> in(t);
      std::size_t rem = c;
      for (std::size_t i = t; i-- > 0;) {
        in[i] = {srcs[i], spec.candidates[rem % k]};
        rem /= k;
      }
      out.push_back(std::move(in));
    }
  }
  return out;
}

}  // namespace

std::vector<DerivedCell> enumerate_cells(const SearchSpaceSpec& spec, CellType type,
                                         std::uint64_t cap) {
  spec.validate();
  const std::uint64_t n = count_subgraphs(spec);
  if (n > cap) {
    throw std::length_error("search space has " + std::to_string(n) + " cells, above the cap of " +
                            std::to_string(cap) + "; reduce B, K or T");
  }
  std::vector<std::vector<std::vector<DerivedInput>>> per_node;
  for (std::size_t b = 0; b < spec.nodes; ++b) {
    per_node.push_back(node_choices(spec, b + SearchSpaceSpec::kCellInputs));
  }
  std::vector<DerivedCell> out;
  out.reserve(n);
  std::vector<std::size_t> pick(spec.nodes, 0);
  while (true) {
    DerivedCell cell;
    cell.type = type;
    cell.B = spec.nodes;
    cell.T = spec.retained;
    for (std::size_t b = 0; b < spec.nodes; ++b) cell.nodes.push_back(per_node[b][pick[b]]);
    out.push_back(std::move(cell));
    // Odometer with the last node varying fastest.
    std::size_t b = spec.nodes;
    while (b > 0 && ++pick[b - 1] == per_node[b - 1].size()) pick[--b] = 0;
    if (b == 0) break;
  }
  return out;
}

std::size_t EnumerationResult::rank_of_id(std::size_t cell_id) const {
  for (const auto& r : ranking) {
    if (r.cell_id == cell_id) return r.rank;
  }
  throw std::out_of_range("cell id " + std::to_string(cell_id) + " not in ranking");
}

std::size_t EnumerationResult::rank_of(const DerivedCell& cell) const {
  for (const auto& r : ranking) {
    if (r.cell.B == cell.B && r.cell.T == cell.T && r.cell.nodes == cell.nodes) return r.rank;
  }
  return 0;
}

EnumerationResult rank_all(const std::vector<DerivedCell>& cells, const SplitDataset& data,
                           const OracleBudget& budget,
                           const std::function<void(std::size_t, std::size_t)>& progress) {
  std::vector<RankedCell> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      RankedCell r;
      r.cell_id = i;
      r.cell = cells[i];
      Network net = build_network(cells[i], std::nullopt, budget.plan, budget.init_seed);
      TrainConfig cfg = budget.train;
      cfg.eval_each_epoch = false;
      const auto tr = train_network(net, data.train, data.valid, cfg);
      r.diverged = tr.diverged;
      if (!tr.diverged && !tr.epochs.empty()) {
        r.val_loss = tr.epochs.back().valid.loss;
        r.val_acc = tr.epochs.back().valid.accuracy;
      } else {
        r.val_loss = std::numeric_limits<double>::infinity();
      }
      results[i] = std::move(r);
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(++done, cells.size());
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(budget.workers, cells.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  std::stable_sort(results.begin(), results.end(), [](const RankedCell& a, const RankedCell& b) {
    if (a.diverged != b.diverged) return !a.diverged;
    if (a.val_loss != b.val_loss) return a.val_loss < b.val_loss;
    return a.cell_id < b.cell_id;
  });
  for (std::size_t i = 0; i < results.size(); ++i) results[i].rank = i + 1;
  return {std::move(results)};
}

void write_ranking_csv(std::ostream& os, const EnumerationResult& result) {
  os << "cell_id,cell_json,val_loss,val_acc,rank\n";
  for (const auto& r : result.ranking) {
    std::string json = cell_to_json(r.cell).dump();
    std::string quoted;
    for (char c : json) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    char loss[32], acc[32];
    std::snprintf(loss, sizeof loss, "%.10g", r.val_loss);
    std::snprintf(acc, sizeof acc, "%.10g", r.val_acc);
    os << r.cell_id << ",\"" << quoted << "\"," << loss << ',' << acc << ',' << r.rank << '\n';
  }
}

MarginalReport validate_marginals(std::span<const double> logits, std::size_t draws,
                                  std::uint64_t seed) {
  const std::size_t k = logits.size();
  MarginalReport rep;
  rep.expected = edge_probabilities(logits);
  rep.counts.assign(k, 0);
  for (std::size_t d = 0; d < draws; ++d) {
    const auto noise = gumbel_noise({seed, 0, d, 0, 0}, k);
    ++rep.counts[gumbel_argmax(logits, noise)];
  }
  // Pool every bin whose expected count is below 5.
  std::vector<std::pair<double, double>> bins;  // (observed, expected)
  double pooled_obs = 0.0, pooled_exp = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double e = rep.expected[i] * static_cast<double>(draws);
    const auto o = static_cast<double>(rep.counts[i]);
    if (e < 5.0) {
      pooled_obs += o;
      pooled_exp += e;
    } else {
      bins.emplace_back(o, e);
    }
  }
  if (pooled_exp > 0.0 || pooled_obs > 0.0) {
    if (pooled_exp < 5.0 && !bins.empty()) {
      // Still too small on its own: fold it into the smallest regular bin.
      auto smallest = std::min_element(bins.begin(), bins.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
      smallest->first += pooled_obs;
      smallest->second += pooled_exp;
    } else {
      bins.emplace_back(pooled_obs, pooled_exp);
    }
  }
  if (bins.size() < 2) return rep;
  for (const auto& [o, e] : bins) {
    if (e > 0.0) {
      rep.chi_square += (o - e) * (o - e) / e;
    } else if (o > 0.0) {
      rep.chi_square = std::numeric_limits<double>::infinity();
    }
  }
  rep.dof = bins.size() - 1;
  rep.p_value = std::isfinite(rep.chi_square)
                    ? boost::math::gamma_q(static_cast<double>(rep.dof) / 2.0, rep.chi_square / 2.0)
                    : 0.0;
  return rep;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) ranks[idx[m]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("spearman: need two equal-length samples of size >= 2");
  }
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
    vb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace gdas
