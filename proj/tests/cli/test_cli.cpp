// Runs the gdas executable end to end in a scratch directory.

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "gdas/config.hpp"
#include "gdas/derive.hpp"
#include "param_formula.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;  // stdout and stderr
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gdas_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Outcome run(const std::string& args) const {
    const std::string cmd = "cd '" + dir_.string() + "' && '" GDAS_CLI_PATH "' " + args + " 2>&1";
    Outcome r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    while (const auto n = std::fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

  void write(const std::string& name, const json& j) const { std::ofstream(dir_ / name) << j.dump(2); }
  std::string read(const fs::path& rel) const {
    std::ifstream in(dir_ / rel, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  static std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

  static json tiny_config() {
    return {{"seed", 3},
            {"dataset", {{"size", 64}}},
            {"search_space", {{"B", 2}, {"T", 1}, {"candidates", {"identity", "zeroize", "sep_conv_3x3"}}}},
            {"network", {{"C", 4}, {"N", 1}}},
            {"search", {{"epochs", 2}, {"batch_size", 16}}},
            {"train", {{"epochs", 3}, {"batch_size", 16}}},
            {"oracle", {{"epochs", 1}, {"batch_size", 32}}}};
  }

  fs::path dir_;
};

TEST_F(Cli, SearchIsByteReproducible) {
  write("c.json", tiny_config());
  ASSERT_EQ(run("search -c c.json -o a").code, 0);
  ASSERT_EQ(run("search -c c.json -o b").code, 0);
  EXPECT_EQ(read("a/metrics.csv"), read("b/metrics.csv"));
  EXPECT_EQ(read("a/arch_params_final.json"), read("b/arch_params_final.json"));
  EXPECT_EQ(lines(read("a/metrics.csv")), 1u + 2u * 2u);
  EXPECT_TRUE(fs::exists(dir_ / "a/arch_params_epoch_0000.json"));
  EXPECT_TRUE(fs::exists(dir_ / "a/arch_params_epoch_0001.json"));
  // Re-running from the resolved config reproduces the run.
  ASSERT_EQ(run("search -c a/resolved_config.json -o c").code, 0);
  EXPECT_EQ(read("a/metrics.csv"), read("c/metrics.csv"));
  ASSERT_EQ(run("search -c c.json -o d --seed 4").code, 0);
  EXPECT_NE(read("a/metrics.csv"), read("d/metrics.csv"));
}

TEST_F(Cli, FixedReductionFlagDropsReductionParameters) {
  write("c.json", tiny_config());
  ASSERT_EQ(run("search -c c.json -o a --frc").code, 0);
  const auto arch = json::parse(read("a/arch_params_final.json"));
  EXPECT_TRUE(arch.contains("normal"));
  EXPECT_FALSE(arch.contains("reduction"));
  EXPECT_EQ(json::parse(read("a/resolved_config.json"))["search"]["fixed_reduction_cell"], true);
  ASSERT_EQ(run("search -c c.json -o b").code, 0);
  EXPECT_TRUE(json::parse(read("b/arch_params_final.json")).contains("reduction"));
}

TEST_F(Cli, InvalidConfigsExitTwoNamingTheField) {
  auto c = tiny_config();
  c.erase("dataset");
  write("nodata.json", c);
  auto r = run("search -c nodata.json");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("dataset"), std::string::npos);

  write("c.json", tiny_config());
  r = run("search -c c.json --tau-end -1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("tau_end"), std::string::npos);

  std::ofstream(dir_ / "broken.json") << "{";
  EXPECT_EQ(run("search -c broken.json").code, 2);
  EXPECT_EQ(run("search").code, 2);
  EXPECT_EQ(run("nonsense").code, 2);
}

// Hand-written logits: node 2 prefers (src 1, sep_conv), node 3 prefers
// (src 2, identity) but zeroize is its strongest op on edge (3, 0).
TEST_F(Cli, DeriveReproducesKnownCells) {
  const json arch = {{"B", 2},
                     {"T", 1},
                     {"candidates", {"identity", "zeroize", "sep_conv_3x3"}},
                     {"edges", {{2, 0}, {2, 1}, {3, 0}, {3, 1}, {3, 2}}},
                     {"normal", {{0, 0, 0.5}, {0, 0, 2.0}, {0, 3.0, 0}, {0.1, 0, 0}, {1.5, 0, 0}}}};
  write("arch.json", arch);
  ASSERT_EQ(run("derive -a arch.json -o with").code, 0);
  auto cell = gdas::cell_from_json(json::parse(read("with/cell.json")));
  EXPECT_EQ(cell.nodes[0][0], (gdas::DerivedInput{1, gdas::OpKind::sep_conv_3x3}));
  EXPECT_EQ(cell.nodes[1][0], (gdas::DerivedInput{0, gdas::OpKind::zeroize}));
  EXPECT_FALSE(fs::exists(dir_ / "with/reduction_cell.json"));
  const auto r = run("derive -a arch.json -o without --exclude-zeroize");
  ASSERT_EQ(r.code, 0);
  cell = gdas::cell_from_json(json::parse(read("without/cell.json")));
  EXPECT_EQ(cell.nodes[1][0], (gdas::DerivedInput{2, gdas::OpKind::identity}));
  auto dot = gdas::export_cell(cell, gdas::CellFormat::dot);
  if (dot.back() != '\n') dot.push_back('\n');
  EXPECT_EQ(read("without/cell.dot"), dot);
  // Retaining two inputs on a node with two predecessors keeps both.
  ASSERT_EQ(run("derive -a arch.json -o t2 -T 2").code, 0);
  EXPECT_EQ(gdas::cell_from_json(json::parse(read("t2/cell.json"))).nodes[0].size(), 2u);
  EXPECT_EQ(run("derive -a arch.json -o t4 -T 4").code, 2);
}

TEST_F(Cli, DeriveWarnsAboutZeroizeOnlyNodes) {
  const json arch = {{"B", 1},
                     {"T", 1},
                     {"candidates", {"identity", "zeroize", "sep_conv_3x3"}},
                     {"edges", {{2, 0}, {2, 1}}},
                     {"normal", {{0, 4.0, 0}, {0, 0, 0}}}};
  write("arch.json", arch);
  const auto r = run("derive -a arch.json -o d");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("warning: normal cell node 2"), std::string::npos);
  EXPECT_EQ(run("export-dot --cell d/cell.json -o d/again.dot").code, 0);
  EXPECT_EQ(read("d/again.dot"), read("d/cell.dot"));
}

TEST_F(Cli, TrainReportsAnalyticParameterCountAndOneRowPerEpoch) {
  const gdas::DerivedCell cell{gdas::CellType::normal, 2, 1,
                               {{{1, gdas::OpKind::sep_conv_3x3}}, {{0, gdas::OpKind::identity}}}};
  write("cell.json", gdas::cell_to_json(cell));
  write("c.json", tiny_config());
  const auto r = run("train -c c.json --cell cell.json -o t");
  ASSERT_EQ(r.code, 0) << r.out;
  gdas::NetworkPlan plan;
  plan.C = 4;
  plan.N = 1;
  const auto expected = gdas::testing::network_params(cell, plan);
  EXPECT_NE(r.out.find("parameters: " + std::to_string(expected) + "\n"), std::string::npos) << r.out;
  const auto csv = read("t/train_metrics.csv");
  EXPECT_EQ(lines(csv), 1u + 3u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,lr,train_loss,train_accuracy,test_loss,test_accuracy");
}

TEST_F(Cli, TrainRejectsMalformedCells) {
  write("c.json", tiny_config());
  write("bad.json", json{{"B", 2}});
  EXPECT_EQ(run("train -c c.json --cell bad.json").code, 2);
  write("cyclic.json", json{{"type", "normal"}, {"B", 1}, {"T", 1}, {"nodes", {{{{"src", 2}, {"op", "identity"}}}}}});
  EXPECT_EQ(run("train -c c.json --cell cyclic.json").code, 2);
  const gdas::DerivedCell b1{gdas::CellType::normal, 1, 1, {{{0, gdas::OpKind::identity}}}};
  const gdas::DerivedCell b2{gdas::CellType::reduction, 2, 1,
                             {{{0, gdas::OpKind::identity}}, {{0, gdas::OpKind::identity}}}};
  write("b1.json", gdas::cell_to_json(b1));
  write("b2.json", gdas::cell_to_json(b2));
  const auto r = run("train -c c.json --cell b1.json --reduction-cell b2.json");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("cell 1"), std::string::npos) << r.out;
}

TEST_F(Cli, TrainingReachesHighTrainAccuracyOnTheToyTask) {
  const gdas::DerivedCell cell{gdas::CellType::normal, 2, 1,
                               {{{1, gdas::OpKind::sep_conv_3x3}}, {{2, gdas::OpKind::sep_conv_3x3}}}};
  write("cell.json", gdas::cell_to_json(cell));
  auto c = tiny_config();
  c["dataset"]["size"] = 256;
  c["train"] = {{"epochs", 100}, {"batch_size", 32}};
  write("c.json", c);
  ASSERT_EQ(run("train -c c.json --cell cell.json -o t").code, 0);
  const auto csv = read("t/train_metrics.csv");
  std::istringstream in(csv);
  std::string line, last;
  while (std::getline(in, line)) last = line;
  double fields[6];
  ASSERT_EQ(std::sscanf(last.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf", &fields[0], &fields[1], &fields[2], &fields[3],
                        &fields[4], &fields[5]),
            6);
  EXPECT_GE(fields[3], 0.95) << last;
}

TEST_F(Cli, OracleEmitsOneRowPerCell) {
  write("c.json", tiny_config());
  const auto r = run("oracle -c c.json -o o --workers 2");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(lines(read("o/ranking.csv")), 1u + 54u);
  auto big = tiny_config();
  big["search_space"] = {{"B", 4}, {"T", 2}};
  write("big.json", big);
  EXPECT_EQ(run("oracle -c big.json -o big").code, 2);
}

TEST_F(Cli, ValidateExitCodes) {
  auto r = run("validate");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_NE(run("validate --tau -0.5").code, 0);
  EXPECT_NE(run("validate --tau 0").code, 0);
}

}  // namespace
