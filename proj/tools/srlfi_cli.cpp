// Command-line runner: srlfi <simulate|train|evaluate|sbc|c2st|report|run> [options]

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "srlfi/errors.hpp"
#include "srlfi/experiment.hpp"

namespace fs = std::filesystem;
using namespace srlfi;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 1;
  std::vector<std::string> inputs;
};

ExperimentConfig load(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config", "a configuration file is required");
  ExperimentConfig c = load_config(o.config);
  if (o.seed) c.seeds = {*o.seed};
  if (!o.out.empty()) c.output = o.out;
  return c;
}

/// Single-seed subcommands write straight into --out (or the configured output).
SeedPaths single_seed_paths(const ExperimentConfig& c) {
  SeedPaths p{c.output};
  fs::create_directories(p.dir);
  return p;
}

std::uint64_t single_seed(const ExperimentConfig& c) {
  if (c.seeds.size() != 1) throw ConfigError("experiment.seeds", "this subcommand needs exactly one seed (use --seed)");
  return c.seeds.front();
}

std::vector<fs::path> metric_files(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::recursive_directory_iterator(in))
        if (e.is_regular_file() && e.path().filename() == "metrics.csv") files.push_back(e.path());
    } else {
      files.emplace_back(in);
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

int dispatch(const std::string& command, const Options& o) {
  if (command == "report") {
    if (o.out.empty()) throw ConfigError("--out", "report needs an output directory");
    std::vector<std::vector<MetricRow>> runs;
    for (const auto& f : metric_files(o.inputs)) {
      std::ifstream in(f);
      if (!in) throw std::runtime_error("cannot open " + f.string());
      runs.push_back(read_metrics_csv(in));
    }
    if (runs.empty()) throw ConfigError("inputs", "no metrics.csv files found");
    const auto summary = emit_report(runs, o.out);
    write_summary_table(std::cout, summary);
    return 0;
  }

  const ExperimentConfig c = load(o);
  if (command == "run") {
    const auto result = run_experiment(c, c.output, o.threads);
    write_summary_table(std::cout, result.summary);
    return 0;
  }
  const std::uint64_t seed = single_seed(c);
  const SeedPaths paths = single_seed_paths(c);
  if (command == "simulate") {
    run_simulate(c, seed, paths);
    std::cout << "wrote " << paths.train_data().string() << " and " << paths.test_data().string() << '\n';
  } else if (command == "train") {
    const auto out = run_train(c, seed, paths);
    std::cout << "trained " << out.checkpoint.summary.epochs_run << " epochs (best " << out.checkpoint.summary.best_epoch
              << ") in " << out.wall_time_sec << " s; wrote " << paths.checkpoint().string() << '\n';
  } else if (command == "evaluate") {
    const auto r = run_evaluate(c, seed, paths);
    std::cout << "nrmse " << r.mean_nrmse << "  r2 " << r.mean_r2 << "  calibration " << r.mean_calibration << '\n';
  } else if (command == "sbc") {
    const auto r = run_sbc(c, seed, paths);
    for (std::size_t k = 0; k < r.ks.size(); ++k)
      std::cout << "component " << k << ": KS D = " << r.ks[k].statistic << ", p = " << r.ks[k].p_value << '\n';
  } else if (command == "c2st") {
    const auto acc = run_c2st(c, seed, paths);
    for (std::size_t i = 0; i < acc.size(); ++i) std::cout << "observation " << i << ": accuracy " << acc[i] << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Likelihood-free inference with generative networks trained by scoring rules"};
  Options o;
  app.add_option("--config", o.config, "Configuration file (.ini or a run manifest .json)");
  app.add_option("--seed", o.seed, "Override the configured seed list with a single seed");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--threads", o.threads, "Worker threads for independent seeds")->check(CLI::PositiveNumber);
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate", "Simulate training and test datasets"},
      {"train", "Train the configured method"},
      {"evaluate", "Compute NRMSE, R^2 and calibration error on the test set"},
      {"sbc", "Simulation-based calibration ranks"},
      {"c2st", "Classifier two-sample test against reference posteriors"},
      {"report", "Aggregate metrics.csv files into a report"},
      {"run", "Simulate, train and evaluate every seed, then report"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    if (name == "report") sub->add_option("inputs", o.inputs, "metrics.csv files or directories")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    return dispatch(app.get_subcommands().front()->get_name(), o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
