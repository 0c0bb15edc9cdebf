#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "srlfi/autodiff.hpp"
#include "srlfi/generator.hpp"
#include "srlfi/scoring_rules.hpp"
#include "srlfi/simulators.hpp"

namespace srlfi {

// --- optimizer --------------------------------------------------------------

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

AdamState make_adam_state(const Weights& weights);

/// One bias-corrected Adam step, in place.
void adam_update(Weights& weights, std::span<const Tensor> grads, AdamState& state,
                 const AdamOptions& options);

// --- early stopping ---------------------------------------------------------

inline constexpr double kMinImprovement = 1e-6;

struct EarlyStopState {
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_check = 0;
  std::size_t checks = 0;
  std::size_t since_improvement = 0;
};

/// Records one validation loss; true when `patience` consecutive checks
/// brought no decrease larger than kMinImprovement.
bool early_stop_check(EarlyStopState& state, double val_loss, std::size_t patience);

struct EarlyStopping {
  bool enabled = false;
  std::size_t patience = 5;
};

struct TrainState {
  std::size_t epoch = 0;
  AdamState adam;
  EarlyStopState early_stop;
};

// --- scoring-rule training --------------------------------------------------

struct SRTrainConfig {
  std::size_t m = 10;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 100;
  EarlyStopping early_stopping;
  double validation_fraction = 0.1;  // 0 disables validation
  std::uint64_t seed = 0;
  /// A kernel bandwidth <= 0 is resolved by the median heuristic on the
  /// first training batch of thetas.
  ScoringRule rule = EnergyScoreParams{};

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double wall_time_sec = 0.0;
};

struct TrainResult {
  GeneratorNet generator;
  std::vector<EpochRecord> history;
  ScoringRule rule;  // with any automatic bandwidth resolved
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  double wall_time_sec = 0.0;
};

/// Mean over the batch of the scoring-rule estimate at each (theta_i, y_i)
/// from m generator draws at y_i. `pair_weights`, when given, scales each
/// term (importance weighting; treated as constants).
ad::Var sr_batch_loss(const GeneratorNet& g, std::span<const ad::Var> weights, const Tensor& thetas,
                      const Tensor& ys, const ScoringRule& rule, std::size_t m, Rng& rng,
                      std::span<const double> pair_weights = {});
/// Same, with the m * |B| latents supplied explicitly (row i*m + j is draw j of pair i).
ad::Var sr_batch_loss(const GeneratorNet& g, std::span<const ad::Var> weights, const Tensor& thetas,
                      const Tensor& ys, const ScoringRule& rule, std::size_t m, const Tensor& latents,
                      std::span<const double> pair_weights = {});

/// Resolves automatic kernel bandwidths from reference thetas.
ScoringRule resolve_bandwidth(const ScoringRule& rule, const Tensor& reference_thetas);

TrainResult train_sr(GeneratorNet g, const Dataset& data, const SRTrainConfig& config,
                     std::span<const double> importance_weights = {});

/// Scoring-rule loss over a whole dataset with latents fixed by `seed`.
double evaluate_sr_loss(const GeneratorNet& g, const Tensor& thetas, const Tensor& ys,
                        const ScoringRule& rule, std::size_t m, std::uint64_t seed,
                        std::span<const double> pair_weights = {}, std::size_t chunk = 256);

// --- adversarial training ---------------------------------------------------

inline constexpr double kCriticClamp = 1e-7;

struct GANTrainConfig {
  double generator_learning_rate = 1e-3;
  double critic_learning_rate = 1e-3;
  std::size_t critic_steps = 1;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 100;
  EarlyStopping early_stopping;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  std::size_t probe_m = 10;  // draws per pair for the validation energy probe

  void validate() const;
};

struct GanBatchLosses {
  ad::Var critic_loss;     // -mean[log c(real) + log(1 - c(fake))]
  ad::Var generator_loss;  // mean[log(1 - c(fake))]
};

/// One latent draw per pair; both losses share the same fake samples.
GanBatchLosses gan_batch_losses(const GeneratorNet& g, std::span<const ad::Var> g_weights,
                                const CriticNet& c, std::span<const ad::Var> c_weights,
                                const Tensor& thetas, const Tensor& ys, Rng& rng);

struct GanTrainResult {
  GeneratorNet generator;
  CriticNet critic;
  std::vector<EpochRecord> history;  // train_loss is the generator loss
  std::vector<double> critic_history;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  double wall_time_sec = 0.0;
};

GanTrainResult train_gan(GeneratorNet g, CriticNet c, const Dataset& data, const GANTrainConfig& config);

/// CSV with columns epoch,train_loss,val_loss,wall_time_sec.
void write_loss_history(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace srlfi
