#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "srlfi/classifier.hpp"
#include "srlfi/training.hpp"

namespace srlfi {

/// Estimate of pi(theta) / pi_tilde(theta), strictly positive.
class RatioEstimator {
public:
  static constexpr double kLogitClamp = 30.0;

  RatioEstimator() = default;
  RatioEstimator(BinaryClassifier classifier, std::size_t n_num, std::size_t n_den);
  /// Wraps a known log-ratio, e.g. an analytic one.
  static RatioEstimator oracle(std::function<double(std::span<const double>)> log_ratio);

  double log_ratio(std::span<const double> theta) const;
  double ratio(std::span<const double> theta) const;
  std::vector<double> ratios(const Tensor& thetas) const;

  const std::optional<BinaryClassifier>& classifier() const noexcept { return classifier_; }

private:
  std::optional<BinaryClassifier> classifier_;
  double log_prior_odds_ = 0.0;  // log(n_den / n_num)
  std::function<double(std::span<const double>)> oracle_;
};

/// Classifier between draws from pi (label 1) and pi_tilde (label 0).
RatioEstimator fit_ratio_classifier(const Tensor& samples_num, const Tensor& samples_den, std::uint64_t seed,
                                    const ClassifierOptions& options = {});

/// sr_batch_loss with each term scaled by the (constant) ratio at theta_i.
ad::Var weighted_sr_loss(const GeneratorNet& g, std::span<const ad::Var> weights, const Tensor& thetas,
                         const Tensor& ys, const ScoringRule& rule, std::size_t m, const RatioEstimator& ratio,
                         Rng& rng);

/// (sum w)^2 / (n sum w^2); 0 when all weights vanish.
double ess_fraction(std::span<const double> weights);

struct RoundConfig {
  std::size_t rounds = 2;
  std::size_t simulations_per_round = 1000;
  std::vector<double> y0;
  SRTrainConfig train;
  GeneratorOptions generator;
  ClassifierOptions classifier;
  double min_ess_fraction = 0.05;
  std::size_t diagnostic_samples = 1000;
  std::uint64_t seed = 0;

  void validate(const SimulatorModel& model) const;
};

struct RoundDiagnostics {
  std::size_t round = 0;
  double ess_fraction = 1.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double posterior_mean_error = std::numeric_limits<double>::quiet_NaN();
};

struct SequentialResult {
  std::vector<GeneratorNet> generators;  // one per round
  std::vector<RoundDiagnostics> diagnostics;
};

/// Round 1 trains from generate_dataset(model, n, derive_seed(seed, "round-1"))
/// with a generator initialized from derive_seed(seed, "generator"); later
/// rounds warm-start from the previous generator on all accumulated pairs.
SequentialResult run_sequential(const SimulatorModel& model, const RoundConfig& config);

/// CSV with columns round,ess_fraction,val_loss,posterior_mean_error.
void write_round_diagnostics(std::ostream& out, std::span<const RoundDiagnostics> rows);

}  // namespace srlfi
