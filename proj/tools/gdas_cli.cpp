// gdas: search, derive, train, oracle, validate, export-dot.
// Exit codes: 0 success, 1 runtime failure, 2 invalid config or input.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gdas/config.hpp"
#include "gdas/derive.hpp"
#include "gdas/engine.hpp"
#include "gdas/kernels.hpp"
#include "gdas/oracle.hpp"
#include "gdas/trainer.hpp"
#include "self_check.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kInvalidInput = 2;

// Flags shared by the config-driven commands. Unset flags leave the config alone.
struct Overrides {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool frc = false;
  bool accelerated = false;
  std::optional<std::string> mode;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> tau_start;
  std::optional<double> tau_end;
  std::optional<double> a_lr;
  std::optional<std::size_t> workers;
};

json read_json(const fs::path& path, const std::string& field) {
  std::ifstream in(path);
  if (!in) throw gdas::ConfigError(field, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& ex) {
    throw gdas::ConfigError(field, path.string() + " is not valid JSON: " + ex.what());
  }
}

void write_text(const fs::path& path, std::string text) {
  if (text.empty() || text.back() != '\n') text.push_back('\n');
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2)); }

// Loads the config file and applies flags, which win over file values.
// `section` names where --epochs and friends land ("search", "train", "oracle").
gdas::RunConfig resolve(const Overrides& o, const std::string& section) {
  json j = read_json(o.config_path, "config");
  if (!j.is_object()) throw gdas::ConfigError("config", "expected a JSON object");
  auto patch = [&](const std::string& sec, const char* key, const json& value) {
    if (!j.contains(sec)) j[sec] = json::object();
    j[sec][key] = value;
  };
  if (!o.out.empty()) j["output_dir"] = o.out;
  if (o.frc) patch("search", "fixed_reduction_cell", true);
  if (o.accelerated) patch("search", "accelerated", true);
  if (o.mode) patch("search", "mode", *o.mode);
  if (o.tau_start) patch("search", "tau_start", *o.tau_start);
  if (o.tau_end) patch("search", "tau_end", *o.tau_end);
  if (o.a_lr) patch("search", "a_lr", *o.a_lr);
  if (o.epochs) patch(section, "epochs", *o.epochs);
  if (o.batch_size) patch(section, "batch_size", *o.batch_size);
  if (o.workers) patch("oracle", "workers", *o.workers);
  auto config = gdas::config_from_json(j);
  if (o.seed) gdas::set_seed(config, *o.seed);
  config.validate();
  return config;
}

fs::path prepare_output(const gdas::RunConfig& config) {
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  write_json(dir / "resolved_config.json", gdas::config_to_json(config));
  return dir;
}

gdas::SplitDataset load_data(const gdas::RunConfig& config) {
  return gdas::split_dataset(gdas::make_oriented_edges(config.dataset.synthetic, config.dataset.seed),
                             config.dataset.train_fraction, config.dataset.seed);
}

// Wall-clock data lives apart from the deterministic outputs.
void write_timing(const fs::path& dir, const char* command, std::chrono::steady_clock::time_point start) {
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(dir / "timing.json", {{"command", command}, {"seconds", secs},
                                   {"kernels", std::string(gdas::kernels::backend_name(gdas::kernels::active_backend()))}});
}

void warn_orphans(const gdas::DerivedCell& cell) {
  for (auto node : cell.orphaned_nodes()) {
    std::cerr << "warning: " << gdas::cell_type_name(cell.type) << " cell node " << node
              << " keeps only zeroize inputs; its output is all zeros\n";
  }
}

gdas::DerivedCell load_cell(const fs::path& path) {
  const json j = read_json(path, "cell");
  try {
    return gdas::cell_from_json(j);
  } catch (const std::invalid_argument& ex) {
    throw gdas::ConfigError("cell", path.string() + ": " + ex.what());
  }
}

int cmd_search(const Overrides& o) {
  const auto start = std::chrono::steady_clock::now();
  const auto config = resolve(o, "search");
  const auto dir = prepare_output(config);
  gdas::SearchEngine engine(config.search, config.search_space, config.network, load_data(config));
  std::cerr << "search: " << engine.total_iterations() << " iterations, "
            << engine.network().parameter_count() << " weights, "
            << engine.network().arch().parameter_count() << " architecture parameters\n";
  const auto result = engine.run([](const gdas::MetricRow& row) {
    if (row.split == "valid") {
      std::fprintf(stderr, "epoch %zu  valid loss %.4f  acc %.3f  tau %.4f\n", row.epoch, row.loss,
                   row.accuracy, row.tau);
    }
  });
  std::ostringstream csv;
  gdas::write_metrics_csv(csv, result.metrics);
  write_text(dir / "metrics.csv", csv.str());
  for (std::size_t e = 0; e < result.snapshots.size(); ++e) {
    char name[64];
    std::snprintf(name, sizeof name, "arch_params_epoch_%04zu.json", e);
    write_json(dir / name, result.snapshots[e]);
  }
  write_json(dir / "arch_params_final.json", result.final_arch);
  write_timing(dir, "search", start);
  std::cout << "wrote " << (dir / "arch_params_final.json").string() << "\n";
  return kOk;
}

struct DeriveOptions {
  std::string arch_path;
  std::string out = ".";
  std::optional<std::size_t> retain;
  bool exclude_zeroize = false;
};

int cmd_derive(const DeriveOptions& o) {
  gdas::SearchSpaceSpec spec;
  gdas::ArchParams arch;
  try {
    arch = gdas::arch_params_from_json(read_json(o.arch_path, "arch"), &spec);
  } catch (const gdas::ConfigError&) {
    throw;
  } catch (const std::invalid_argument& ex) {
    throw gdas::ConfigError("arch", o.arch_path + ": " + ex.what());
  }
  if (o.retain) spec.retained = *o.retain;
  try {
    spec.validate();
    gdas::count_subgraphs(spec);
  } catch (const std::invalid_argument& ex) {
    throw gdas::ConfigError("retain", ex.what());
  } catch (const std::overflow_error&) {
  }
  const auto omega = o.exclude_zeroize ? gdas::omega_without_zeroize(spec) : std::vector<std::size_t>{};
  const fs::path dir = o.out;
  fs::create_directories(dir);
  auto emit = [&](gdas::CellType type, const std::string& stem) {
    const auto cell = gdas::derive_cell(arch.of(type), spec, type, omega);
    warn_orphans(cell);
    write_text(dir / (stem + ".json"), gdas::export_cell(cell, gdas::CellFormat::json));
    write_text(dir / (stem + ".dot"), gdas::export_cell(cell, gdas::CellFormat::dot));
    std::cout << "wrote " << (dir / (stem + ".json")).string() << "\n";
  };
  emit(gdas::CellType::normal, "cell");
  if (arch.has_reduction()) emit(gdas::CellType::reduction, "reduction_cell");
  return kOk;
}

int cmd_train(const Overrides& o, const std::string& cell_path, const std::string& reduction_path) {
  const auto start = std::chrono::steady_clock::now();
  const auto config = resolve(o, "train");
  const auto normal = load_cell(cell_path);
  std::optional<gdas::DerivedCell> reduction;
  if (!reduction_path.empty()) reduction = load_cell(reduction_path);
  warn_orphans(normal);
  if (reduction) warn_orphans(*reduction);
  auto net = gdas::build_network(normal, reduction, config.network, config.train.seed);
  const auto dir = prepare_output(config);
  std::cout << "parameters: " << net.parameter_count() << "\n";
  const auto data = load_data(config);
  std::ostringstream csv;
  csv << "epoch,lr,train_loss,train_accuracy,test_loss,test_accuracy\n";
  const auto result = gdas::train_network(net, data.train, data.valid, config.train,
                                          [&](const gdas::EpochRecord& r) {
                                            char line[256];
                                            std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                                                          r.epoch, r.lr, r.train.loss, r.train.accuracy,
                                                          r.valid.loss, r.valid.accuracy);
                                            csv << line;
                                          });
  write_text(dir / "train_metrics.csv", csv.str());
  write_timing(dir, "train", start);
  if (result.diverged) {
    std::cerr << "error: training diverged at epoch " << result.diverged_at << "\n";
    return kRuntimeFailure;
  }
  const auto& last = result.epochs.back();
  std::printf("final train loss %.4f acc %.4f; test loss %.4f acc %.4f\n", last.train.loss,
              last.train.accuracy, last.valid.loss, last.valid.accuracy);
  return kOk;
}

int cmd_oracle(const Overrides& o) {
  const auto start = std::chrono::steady_clock::now();
  const auto config = resolve(o, "oracle");
  std::vector<gdas::DerivedCell> cells;
  try {
    cells = gdas::enumerate_cells(config.search_space, gdas::CellType::normal, config.oracle.cap);
  } catch (const std::length_error& ex) {
    throw gdas::ConfigError("search_space", ex.what());
  }
  const auto dir = prepare_output(config);
  gdas::OracleBudget budget;
  budget.train = config.oracle.train;
  budget.plan = config.network;
  budget.init_seed = config.oracle.train.seed;
  budget.workers = config.oracle.workers;
  std::cerr << "oracle: training " << cells.size() << " cells\n";
  const auto result = gdas::rank_all(cells, load_data(config), budget, [](std::size_t done, std::size_t total) {
    if (done % 10 == 0 || done == total) std::fprintf(stderr, "  %zu/%zu\n", done, total);
  });
  std::ostringstream csv;
  gdas::write_ranking_csv(csv, result);
  write_text(dir / "ranking.csv", csv.str());
  write_timing(dir, "oracle", start);
  std::cout << "wrote " << (dir / "ranking.csv").string() << " (" << cells.size() << " cells)\n";
  return kOk;
}

int cmd_validate(const std::string& config_path, gdas::cli::SelfCheckOptions opts) {
  if (!(opts.tau > 0.0) || !std::isfinite(opts.tau)) {
    throw gdas::ConfigError("tau", "must be positive and finite");
  }
  if (opts.draws == 0) throw gdas::ConfigError("draws", "must be >= 1");
  gdas::RunConfig config;
  if (!config_path.empty()) {
    config = gdas::config_from_json(read_json(config_path, "config"));
  } else {
    config.search_space.candidates = {gdas::OpKind::identity, gdas::OpKind::zeroize,
                                      gdas::OpKind::sep_conv_3x3};
  }
  bool ok = true;
  for (const auto& r : gdas::cli::run_self_checks(config, opts)) {
    std::printf("%s %-28s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? kOk : kRuntimeFailure;
}

int cmd_export_dot(const std::string& cell_path, const std::string& out) {
  const auto cell = load_cell(cell_path);
  warn_orphans(cell);
  const auto dot = gdas::export_cell(cell, gdas::CellFormat::dot);
  if (out.empty()) {
    std::cout << dot;
    if (dot.empty() || dot.back() != '\n') std::cout << '\n';
  } else {
    write_text(out, dot);
  }
  return kOk;
}

void add_config_flags(CLI::App* cmd, Overrides& o, bool search_flags) {
  cmd->add_option("-c,--config", o.config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--out", o.out, "Output directory (overrides output_dir)");
  cmd->add_option("--seed", o.seed, "Top-level seed; every subsystem seed derives from it");
  cmd->add_option("--epochs", o.epochs, "Epoch budget for this command");
  cmd->add_option("--batch-size", o.batch_size, "Batch size for this command");
  if (search_flags) {
    cmd->add_flag("--frc", o.frc, "Fix the reduction cell; search only the normal cell");
    cmd->add_flag("--accelerated", o.accelerated, "Evaluate only the sampled op on each edge");
    cmd->add_option("--mode", o.mode, "hard_sampled | relaxed | accelerated");
    cmd->add_option("--tau-start", o.tau_start, "Initial temperature");
    cmd->add_option("--tau-end", o.tau_end, "Final temperature");
    cmd->add_option("--a-lr", o.a_lr, "Architecture learning rate");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable architecture search with Gumbel sampling over a DAG supernet"};
  app.require_subcommand(1);

  Overrides search_o, train_o, oracle_o;
  auto* search = app.add_subcommand("search", "Run the alternating W/A search");
  add_config_flags(search, search_o, true);

  DeriveOptions derive_o;
  auto* derive = app.add_subcommand("derive", "Derive discrete cells from architecture parameters");
  derive->add_option("-a,--arch", derive_o.arch_path, "arch_params JSON")->required()->check(CLI::ExistingFile);
  derive->add_option("-o,--out", derive_o.out, "Output directory");
  derive->add_option("-T,--retain", derive_o.retain, "Inputs kept per node (default: from the file)");
  derive->add_flag("--exclude-zeroize", derive_o.exclude_zeroize, "Never label an edge zeroize");

  std::string cell_path, reduction_path;
  auto* train = app.add_subcommand("train", "Train a network built from derived cells");
  add_config_flags(train, train_o, false);
  train->add_option("--cell", cell_path, "Normal cell JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--reduction-cell", reduction_path, "Reduction cell JSON (default: fixed reduction cell)")
      ->check(CLI::ExistingFile);

  auto* oracle = app.add_subcommand("oracle", "Train every cell of a tiny space and rank them");
  add_config_flags(oracle, oracle_o, false);
  oracle->add_option("--workers", oracle_o.workers, "Worker threads");

  std::string validate_config;
  gdas::cli::SelfCheckOptions check_o;
  auto* validate = app.add_subcommand("validate", "Run sampler, acceleration and gradient self-checks");
  validate->add_option("-c,--config", validate_config, "Run config (JSON)")->check(CLI::ExistingFile);
  validate->add_option("--tau", check_o.tau, "Temperature used by the checks");
  validate->add_option("--draws", check_o.draws, "Gumbel-Max draws per logit vector");
  validate->add_option("--seed", check_o.seed, "Seed for the checks");

  std::string dot_cell, dot_out;
  auto* export_dot = app.add_subcommand("export-dot", "Render a cell JSON as Graphviz DOT");
  export_dot->add_option("--cell", dot_cell, "Cell JSON")->required()->check(CLI::ExistingFile);
  export_dot->add_option("-o,--out", dot_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex);
    return code == 0 ? kOk : kInvalidInput;
  }

  try {
    if (search->parsed()) return cmd_search(search_o);
    if (derive->parsed()) return cmd_derive(derive_o);
    if (train->parsed()) return cmd_train(train_o, cell_path, reduction_path);
    if (oracle->parsed()) return cmd_oracle(oracle_o);
    if (validate->parsed()) return cmd_validate(validate_config, check_o);
    if (export_dot->parsed()) return cmd_export_dot(dot_cell, dot_out);
  } catch (const gdas::ConfigError& ex) {
    std::cerr << "error: invalid config: " << ex.what() << "\n";
    return kInvalidInput;
  } catch (const gdas::SearchDiverged& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kRuntimeFailure;
  } catch (const std::invalid_argument& ex) {
    std::cerr << "error: invalid input: " << ex.what() << "\n";
    return kInvalidInput;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kRuntimeFailure;
  }
  return kRuntimeFailure;
}
