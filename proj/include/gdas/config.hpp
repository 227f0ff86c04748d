#pragma once

// Run configuration: one JSON document covering data, search space, network
// plan and per-command budgets. Missing fields take defaults; the resolved
// form written next to every run lists all of them.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "gdas/dataset.hpp"
#include "gdas/engine.hpp"
#include "gdas/network.hpp"
#include "gdas/search_space.hpp"
#include "gdas/trainer.hpp"

namespace gdas {

// Invalid configuration; field() holds the dotted path of the culprit.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct DatasetConfig {
  SyntheticSpec synthetic;
  std::uint64_t seed = 0;
  double train_fraction = 0.5;
};

struct OracleConfig {
  TrainConfig train{.epochs = 100};
  std::size_t workers = 1;
  std::uint64_t cap = 10000;
};

// Desk-scale search space: B=2, T=2 over {identity, zeroize, sep_conv_3x3,
// max_pool_3x3}. The library default (B=4, all eight ops) stays available.
SearchSpaceSpec desk_scale_space();

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DatasetConfig dataset;
  SearchSpaceSpec search_space = desk_scale_space();
  NetworkPlan network;
  SearchConfig search;
  TrainConfig train;
  OracleConfig oracle;
  bool exclude_zeroize = false;

  // Cross-field checks; throws ConfigError.
  void validate() const;
};

// Parses and validates. The "dataset" section is required; unknown keys are
// rejected. Seeds not given explicitly inherit the top-level seed.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);
// Throws ConfigError (field "config") when the file is unreadable or not JSON.
RunConfig load_config(const std::filesystem::path& path);
// Propagates the top-level seed to every derived seed field.
void set_seed(RunConfig& config, std::uint64_t seed);

}  // namespace gdas
