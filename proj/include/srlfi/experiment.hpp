#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "srlfi/io.hpp"
#include "srlfi/metrics.hpp"
#include "srlfi/training.hpp"

namespace srlfi {

enum class Method { energy, kernel, patched_energy, patched_kernel, gan };

std::string to_string(Method m);
Method parse_method(const std::string& name);
bool is_kernel_method(Method m);
bool is_patched_method(Method m);

struct ExperimentConfig {
  // [experiment]
  std::string model = "conjugate_gaussian";
  Method method = Method::energy;
  std::size_t n_train = 10000;
  std::size_t n_test = 100;
  std::size_t n_post = 1000;
  std::vector<std::uint64_t> seeds{0};
  std::string output = "out";

  // [scoring]
  std::size_t m = 10;
  double beta = 1.0;
  std::optional<double> gamma;  // kernel methods; absent means median heuristic
  std::optional<std::size_t> patch_size;
  std::optional<std::size_t> patch_step;
  double w1 = 1.0;
  double w2 = 1.0;

  // [training]
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double critic_learning_rate = 1e-3;
  std::size_t critic_steps = 1;
  std::size_t max_epochs = 100;
  bool early_stopping = true;
  std::size_t patience = 5;
  double validation_fraction = 0.1;

  // [network]
  std::vector<std::size_t> hidden{128, 128, 128};
  Activation activation = Activation::leaky_relu;
  std::size_t latent_dim = 0;  // 0: parameter dim
  LatentFamily latent_family = LatentFamily::standard_normal;

  // [sbc]
  std::size_t sbc_priors = 200;
  std::size_t sbc_draws = 100;

  // [c2st]
  std::size_t c2st_observations = 5;
  std::size_t c2st_samples = 1000;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Flat key-value text with [section] headers. A .json path is read as a
/// run manifest and its "config" object is used instead.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config_ini(const std::string& text);
/// section -> key -> value, as accepted by parse_config_ini.
ExperimentConfig config_from_sections(const std::map<std::string, std::map<std::string, std::string>>& sections);
std::map<std::string, std::map<std::string, std::string>> config_sections(const ExperimentConfig& config);
/// Canonical text form; parse_config_ini(config_to_ini(c)) reproduces c.
std::string config_to_ini(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

// --- pipeline stages --------------------------------------------------------

struct SeedPaths {
  std::filesystem::path dir;
  std::filesystem::path train_data() const { return dir / "train.ds"; }
  std::filesystem::path test_data() const { return dir / "test.ds"; }
  std::filesystem::path checkpoint() const { return dir / "generator.ck"; }
  std::filesystem::path loss_history() const { return dir / "loss_history.csv"; }
  std::filesystem::path metrics() const { return dir / "metrics.csv"; }
  std::filesystem::path sbc() const { return dir / "sbc_ranks.csv"; }
  std::filesystem::path c2st() const { return dir / "c2st.csv"; }
};

struct Datasets {
  Dataset train;
  Dataset test;
};

Datasets make_datasets(const ExperimentConfig& config, std::uint64_t seed);
/// Writes train/test datasets (binary) plus a CSV export of the training set.
void run_simulate(const ExperimentConfig& config, std::uint64_t seed, const SeedPaths& paths);

struct TrainOutcome {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
  double wall_time_sec = 0.0;
};

/// Trains the configured method on `train`; throws NumericError on divergence.
TrainOutcome train_method(const ExperimentConfig& config, const Dataset& train, std::uint64_t seed);
/// Loads datasets from `paths` when present (simulating otherwise), trains,
/// writes the checkpoint and loss history.
TrainOutcome run_train(const ExperimentConfig& config, std::uint64_t seed, const SeedPaths& paths);

MetricsReport evaluate_checkpoint(const ExperimentConfig& config, const Checkpoint& checkpoint,
                                  const Dataset& test, std::uint64_t seed);
MetricsReport run_evaluate(const ExperimentConfig& config, std::uint64_t seed, const SeedPaths& paths);

/// Ranks per component and the KS p-value of each.
struct SbcOutcome {
  SBCResult result;
  std::vector<KsResult> ks;
};
SbcOutcome run_sbc(const ExperimentConfig& config, std::uint64_t seed, const SeedPaths& paths);

/// C2ST accuracy of generator draws against reference posterior draws at
/// the first c2st_observations test observations.
std::vector<double> run_c2st(const ExperimentConfig& config, std::uint64_t seed, const SeedPaths& paths);

struct RunSummary {
  std::vector<MetricsReport> reports;
  std::vector<SummaryRow> summary;
  double wall_time_sec = 0.0;
};

/// Full protocol for every seed (simulate, train, evaluate), then the report
/// and run manifest in `out`. Seeds run on up to `threads` workers.
RunSummary run_experiment(const ExperimentConfig& config, const std::filesystem::path& out, std::size_t threads = 1);

}  // namespace srlfi
