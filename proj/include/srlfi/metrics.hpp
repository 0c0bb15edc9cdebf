#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "srlfi/classifier.hpp"
#include "srlfi/generator.hpp"
#include "srlfi/simulators.hpp"
#include "srlfi/tensor.hpp"

namespace srlfi {

// --- point-estimate metrics -------------------------------------------------

struct NrmseResult {
  double value = 0.0;
  bool normalized = true;  // false when the truths have zero range
};

NrmseResult nrmse(std::span<const double> truths, std::span<const double> predictions);

/// Throws DomainError when all truths are equal.
double r_squared(std::span<const double> truths, std::span<const double> predictions);

// --- calibration ------------------------------------------------------------

/// The 100 credible levels i / 101, i = 1..100.
std::vector<double> calibration_alpha_grid();


/// Central alpha interval [x_(l), x_(n-1-l)] with l = floor((1 - alpha) / 2 * (n - 1)).
/// Order statistics keep coverage invariant under monotone transforms.
std::pair<double, double> central_interval(std::span<const double> sorted, double alpha);
/// Fraction of pairs whose truth lies inside the central alpha interval of
/// its samples (one component).
double empirical_coverage(std::span<const double> truths, std::span<const std::vector<double>> samples,
                          double alpha);

/// Median over the alpha grid of |coverage(alpha) - alpha| for one component.
double calibration_error(std::span<const double> truths, std::span<const std::vector<double>> samples);

// --- simulation-based calibration -------------------------------------------

/// Draws `count` approximate posterior samples (count x parameter_dim) at y.
using PosteriorSampler =
    std::function<Tensor(std::span<const double> y, std::size_t count, std::uint64_t seed)>;

struct SBCResult {
  std::vector<std::vector<std::size_t>> ranks;  // [component][prior draw], values in 0..N
  std::size_t N = 0;
};

SBCResult sbc_ranks(const SimulatorModel& model, const PosteriorSampler& sampler, std::size_t n_priors,
                    std::size_t N, std::uint64_t seed);

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_survival(double lambda);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// KS test of ranks against the discrete uniform distribution on {0..N}.
KsResult ks_uniform_ranks(std::span<const std::size_t> ranks, std::size_t N);

// --- two-sample test --------------------------------------------------------

struct C2stOptions {
  std::size_t folds = 5;
  std::size_t max_epochs = 1000;
  std::size_t batch_size = 200;
  double learning_rate = 1e-3;
  double tolerance = 1e-4;
  std::size_t patience = 10;
};

/// Cross-validated accuracy of an MLP (two hidden layers of 10 d relu
/// units) separating samples_p from samples_q.
double c2st_accuracy(const Tensor& samples_p, const Tensor& samples_q, std::uint64_t seed,
                     const C2stOptions& options = {});

// --- evaluation protocol ----------------------------------------------------

struct EvaluationSet {
  Tensor theta;                 // n x parameter_dim test truths
  Tensor y;                     // n x data_dim test observations
  std::vector<Tensor> samples;  // n matrices, n_post x parameter_dim

  std::size_t size() const noexcept { return samples.size(); }
  std::size_t n_post() const noexcept { return samples.empty() ? 0 : samples.front().rows(); }
  void validate() const;
};

EvaluationSet make_evaluation_set(const Dataset& test, const PosteriorSampler& sampler, std::size_t n_post,
                                  std::uint64_t seed);
PosteriorSampler generator_sampler(const GeneratorNet& g);

struct MetricsReport {
  std::string method;
  std::string model;
  std::size_t n_train = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;

  std::vector<double> nrmse;
  std::vector<bool> nrmse_normalized;
  std::vector<double> r2;
  std::vector<double> calibration;

  double mean_nrmse = 0.0;
  double mean_r2 = 0.0;
  double mean_calibration = 0.0;

  double wall_time_sec = std::numeric_limits<double>::quiet_NaN();
  std::size_t early_stop_epoch = 0;
};

/// Per-component NRMSE, R^2 and calibration error plus their averages.
/// NRMSE and R^2 use the sample mean as the point estimate; an R^2 for a
/// component with constant truths is reported as NaN.
MetricsReport evaluate_metrics(const EvaluationSet& eval);

}  // namespace srlfi
