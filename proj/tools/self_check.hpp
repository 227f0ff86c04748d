#pragma once

// Property checks behind `gdas validate`. Each returns a one-line report.

#include <cstdint>
#include <string>
#include <vector>

#include "gdas/config.hpp"

namespace gdas::cli {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelfCheckOptions {
  double tau = 5.0;
  std::size_t draws = 20000;
  std::size_t logit_vectors = 5;
  std::uint64_t seed = 0;
};

std::vector<CheckResult> run_self_checks(const RunConfig& config, const SelfCheckOptions& options);

}  // namespace gdas::cli
