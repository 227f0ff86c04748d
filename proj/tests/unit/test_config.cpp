#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "gdas/config.hpp"

namespace gdas {
namespace {

using nlohmann::json;

json minimal() { return json{{"dataset", json::object()}}; }

std::string field_of(const json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& ex) {
    return ex.field();
  }
  return "";
}

TEST(Config, MinimalDocumentTakesDefaults) {
  const auto c = config_from_json(minimal());
  EXPECT_EQ(c.search_space.nodes, 2u);
  EXPECT_EQ(c.search_space.num_candidates(), 4u);
  EXPECT_EQ(c.network.C, 4u);
  EXPECT_EQ(c.network.N, 1u);
  EXPECT_EQ(c.search.epochs, 240u);
  EXPECT_DOUBLE_EQ(c.search.tau_start, 10.0);
  EXPECT_DOUBLE_EQ(c.search.tau_end, 0.1);
  EXPECT_EQ(c.network.num_classes, c.dataset.synthetic.num_classes);
}

TEST(Config, MissingDatasetIsNamed) {
  EXPECT_EQ(field_of(json::object()), "dataset");
  EXPECT_EQ(field_of(json{{"seed", 1}}), "dataset");
}

TEST(Config, ErrorsNameTheField) {
  auto j = minimal();
  j["search"] = {{"tau_end", -1.0}};
  EXPECT_EQ(field_of(j), "search");
  j = minimal();
  j["search"] = {{"epochs", -3}};
  EXPECT_EQ(field_of(j), "search.epochs");
  j = minimal();
  j["dataset"] = {{"kind", "cifar"}};
  EXPECT_EQ(field_of(j), "dataset.kind");
  j = minimal();
  j["search"] = {{"mode", "soft"}};
  EXPECT_EQ(field_of(j), "search.mode");
  j = minimal();
  j["search_space"] = {{"candidates", {"identity", "zeroize", "conv_7x7"}}};
  EXPECT_EQ(field_of(j), "search_space.candidates");
  j = minimal();
  j["search_space"] = {{"B", 2}, {"T", 3}};
  EXPECT_EQ(field_of(j), "search_space");
  j = minimal();
  j["network"] = {{"num_classes", 3}};
  EXPECT_EQ(field_of(j), "network.num_classes");
}

TEST(Config, UnknownKeysAreRejected) {
  auto j = minimal();
  j["serch"] = json::object();
  EXPECT_EQ(field_of(j), "serch");
  j = minimal();
  j["search"] = {{"tau", 1.0}};
  EXPECT_EQ(field_of(j), "search.tau");
}

TEST(Config, CandidateSetMinimum) {
  auto j = minimal();
  j["search_space"] = {{"candidates", {"identity", "zeroize", "avg_pool_3x3"}}};
  EXPECT_EQ(field_of(j), "search_space.candidates");
  j["search_space"] = {{"candidates", {"identity", "sep_conv_3x3"}}};
  EXPECT_EQ(field_of(j), "search_space.candidates");
  j["search_space"] = {{"candidates", {"zeroize", "identity", "dil_sep_conv_5x5"}}};
  EXPECT_EQ(field_of(j), "");
}

TEST(Config, SeedPropagatesUnlessOverridden) {
  auto j = minimal();
  j["seed"] = 17;
  j["train"] = {{"seed", 5}};
  const auto c = config_from_json(j);
  EXPECT_EQ(c.dataset.seed, 17u);
  EXPECT_EQ(c.search.seed, 17u);
  EXPECT_EQ(c.oracle.train.seed, 17u);
  EXPECT_EQ(c.train.seed, 5u);
}

TEST(Config, ResolvedFormRoundTrips) {
  auto j = minimal();
  j["seed"] = 9;
  j["search_space"] = {{"B", 2}, {"T", 1}, {"candidates", {"identity", "zeroize", "sep_conv_3x3"}}};
  j["search"] = {{"fixed_reduction_cell", true}, {"mode", "relaxed"}, {"a_lr", 0.01}};
  j["dataset"] = {{"size", 64}, {"noise", 0.25}};
  const auto c = config_from_json(j);
  const auto resolved = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(resolved)), resolved);
  EXPECT_EQ(resolved["search"]["mode"], "relaxed");
  EXPECT_EQ(resolved["search_space"]["candidates"].size(), 3u);
}

TEST(Config, LoadConfigReportsUnreadableAndMalformedFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "gdas_config_test";
  std::filesystem::create_directories(dir);
  try {
    load_config(dir / "missing.json");
    FAIL();
  } catch (const ConfigError& ex) {
    EXPECT_EQ(ex.field(), "config");
  }
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  std::ofstream(dir / "ok.json") << R"({"dataset": {"size": 32}})";
  EXPECT_EQ(load_config(dir / "ok.json").dataset.synthetic.size, 32u);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace gdas
