// synmem command-line front end.
//
//   synmem <fc-sweep|conv-sweep|density-leak-grid|train-frontier>
//          --config <path> --out <dir> [--seed N] [--full-scale] [--jobs N]
//   synmem check-csv <file> --schema <name>
//
// Exit codes: 0 success, 2 config error, 3 calibration failure,
// 4 divergence in all cells, 1 anything else.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "synmem/synmem.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kCalibration = 3, kDiverged = 4 };

struct RunArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool full_scale = false;
  std::optional<std::size_t> jobs;
};

int run(synmem::Experiment kind, const RunArgs& args) {
  synmem::ExperimentConfig cfg;
  try {
    cfg = synmem::load_config(args.config);
    if (cfg.kind != kind)
      throw synmem::ConfigError("config describes '" + std::string(synmem::experiment_name(cfg.kind)) +
                                "' but the subcommand is '" + std::string(synmem::experiment_name(kind)) + "'");
    if (args.seed) cfg.seed = *args.seed;
    if (args.full_scale || cfg.full_scale) synmem::apply_full_scale(cfg);
    if (args.jobs) cfg.jobs = *args.jobs;
    synmem::validate(cfg);
    synmem::quant::QuantConfig q{cfg.bit_widths.front(), cfg.train.error_bits, cfg.train.membrane_bits, 1, cfg.seed};
    if (kind == synmem::Experiment::TrainFrontier) q.validate();
  } catch (const synmem::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  }

  try {
    const auto model = synmem::resolve_cost_model(cfg);
    const auto out = synmem::run_experiment(cfg);
    auto manifest = synmem::run_manifest(cfg, out, model);
    manifest["library_versions"]["CLI11"] = CLI11_VERSION;
    synmem::write_outputs(args.out, out, manifest);
    for (const auto& [name, body] : out.files) std::cout << (std::filesystem::path(args.out) / name).string() << '\n';
    if (out.all_diverged()) {
      std::cerr << "every training cell diverged\n";
      return kDiverged;
    }
    if (out.diverged_cells) std::cerr << out.diverged_cells << " of " << out.cells << " cells diverged\n";
  } catch (const synmem::energy::CalibrationError& e) {
    std::cerr << "calibration failed: " << e.what() << '\n';
    return kCalibration;
  }
  return kOk;
}

int check_csv(const std::string& file, const std::string& schema_name) {
  const auto* schema = synmem::schema_by_name(schema_name);
  if (!schema) {
    std::cerr << "unknown schema '" << schema_name << "'\n";
    return kConfig;
  }
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    std::cerr << "cannot open " << file << '\n';
    return kFailure;
  }
  std::ostringstream os;
  os << in.rdbuf();
  try {
    const auto rows = synmem::validate_csv(os.str(), *schema);
    std::cout << file << ": " << rows << " rows, schema " << schema->name << " ok\n";
  } catch (const synmem::CsvError& e) {
    std::cerr << file << ": " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synaptic memory encodings: energy sweeps and quantized SNN training"};
  app.set_version_flag("--version", std::string(synmem::kVersion));
  app.require_subcommand(1);

  RunArgs args;
  std::vector<std::pair<CLI::App*, synmem::Experiment>> runs;
  for (auto kind : {synmem::Experiment::FcSweep, synmem::Experiment::ConvSweep, synmem::Experiment::DensityLeakGrid,
                    synmem::Experiment::TrainFrontier}) {
    auto* sub = app.add_subcommand(std::string(synmem::experiment_name(kind)));
    sub->add_option("--config", args.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "output directory")->required();
    sub->add_option("--seed", args.seed, "override the config seed");
    sub->add_flag("--full-scale", args.full_scale, "train the full-size 700-400-250 network");
    sub->add_option("--jobs", args.jobs, "worker threads for independent cells (0 = all cores)");
    runs.emplace_back(sub, kind);
  }

  std::string csv_file, csv_schema;
  auto* check = app.add_subcommand("check-csv", "validate an output CSV against its schema");
  check->add_option("file", csv_file)->required();
  check->add_option("--schema", csv_schema, "fc-sweep, conv-sweep, density-leak-grid, train-frontier, learning-curve")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*check) return check_csv(csv_file, csv_schema);
    for (const auto& [sub, kind] : runs)
      if (*sub) return run(kind, args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
