#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srlfi/random.hpp"
#include "srlfi/tensor.hpp"

namespace srlfi {

class SupportError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct Box {
  std::vector<double> low;
  std::vector<double> high;
};

/// Prior plus forward simulator. Implementations are stateless; all
/// randomness comes from the Rng passed in.
class SimulatorModel {
public:
  virtual ~SimulatorModel() = default;

  virtual std::string name() const = 0;
  virtual std::size_t parameter_dim() const = 0;
  virtual std::size_t data_dim() const = 0;

  virtual void sample_prior(Rng& rng, std::span<double> theta) const = 0;
  virtual void simulate(std::span<const double> theta, Rng& rng, std::span<double> y) const = 0;
  virtual bool in_support(std::span<const double> theta) const = 0;

  /// Bounding box of a bounded prior.
  virtual std::optional<Box> prior_box() const { return std::nullopt; }
  /// 1D/2D layout of the parameter vector, for patched scoring.
  virtual std::optional<std::vector<std::size_t>> parameter_grid() const { return std::nullopt; }

  /// Tractable likelihood, when available (used only by reference samplers).
  virtual std::optional<double> log_likelihood(std::span<const double> theta,
                                               std::span<const double> y) const;
  /// Upper bound on log_likelihood(., y), enabling exact rejection sampling.
  virtual std::optional<double> log_likelihood_bound(std::span<const double> y) const;
  /// Exact posterior sampler, when available.
  virtual std::optional<Tensor> sample_exact_posterior(std::span<const double> y, std::size_t count,
                                                       Rng& rng) const;
  virtual std::optional<std::vector<double>> posterior_mean(std::span<const double> y) const;
};

struct GaussianPosterior {
  double mean;
  double sd;
};

/// Conjugate normal-normal update for y ~ N(theta, noise_sd^2), theta ~ N(mu0, sd0^2).
GaussianPosterior analytic_posterior_gaussian(double prior_mean, double prior_sd, double noise_sd,
                                              double y);

/// theta ~ N(mu0, sd0^2), y ~ N(theta, sigma^2).
class ConjugateGaussianModel : public SimulatorModel {
public:
  ConjugateGaussianModel(double prior_mean = 0.0, double prior_sd = 1.0, double noise_sd = 1.0);

  std::string name() const override { return "conjugate_gaussian"; }
  std::size_t parameter_dim() const override { return 1; }
  std::size_t data_dim() const override { return 1; }
  void sample_prior(Rng& rng, std::span<double> theta) const override;
  void simulate(std::span<const double> theta, Rng& rng, std::span<double> y) const override;
  bool in_support(std::span<const double> theta) const override;
  std::optional<double> log_likelihood(std::span<const double> theta,
                                       std::span<const double> y) const override;
  std::optional<Tensor> sample_exact_posterior(std::span<const double> y, std::size_t count,
                                               Rng& rng) const override;
  std::optional<std::vector<double>> posterior_mean(std::span<const double> y) const override;

  GaussianPosterior posterior(double y) const;
  double prior_mean() const noexcept { return prior_mean_; }
  double prior_sd() const noexcept { return prior_sd_; }
  double noise_sd() const noexcept { return noise_sd_; }

private:
  double prior_mean_, prior_sd_, noise_sd_;
};

/// Two Moons: theta uniform on [-1, 1]^2, y a noisy crescent point shifted by theta.
class TwoMoonsModel : public SimulatorModel {
public:
  std::string name() const override { return "two_moons"; }
  std::size_t parameter_dim() const override { return 2; }
  std::size_t data_dim() const override { return 2; }
  void sample_prior(Rng& rng, std::span<double> theta) const override;
  void simulate(std::span<const double> theta, Rng& rng, std::span<double> y) const override;
  bool in_support(std::span<const double> theta) const override;
  std::optional<Box> prior_box() const override;
  std::optional<double> log_likelihood(std::span<const double> theta,
                                       std::span<const double> y) const override;
  std::optional<double> log_likelihood_bound(std::span<const double> y) const override;

  static constexpr double kRadiusMean = 0.1;
  static constexpr double kRadiusSd = 0.01;
  static constexpr double kOffset = 0.25;
};

/// SLCP: theta uniform on [-3, 3]^5; y holds four i.i.d. 2D Gaussian points
/// with mean (theta1, theta2), scales theta3^2, theta4^2 and correlation tanh(theta5).
class SlcpModel : public SimulatorModel {
public:
  std::string name() const override { return "slcp"; }
  std::size_t parameter_dim() const override { return 5; }
  std::size_t data_dim() const override { return 8; }
  void sample_prior(Rng& rng, std::span<double> theta) const override;
  void simulate(std::span<const double> theta, Rng& rng, std::span<double> y) const override;
  bool in_support(std::span<const double> theta) const override;
  std::optional<Box> prior_box() const override;
  std::optional<double> log_likelihood(std::span<const double> theta,
                                       std::span<const double> y) const override;

  /// 2x2 covariance (row-major) built from theta.
  static std::vector<double> covariance(std::span<const double> theta);
};

/// 1D grid toy: theta is a Gaussian-process draw on a grid with a
/// squared-exponential kernel; y is a 3-cell moving average plus Gaussian noise.
class GridToyModel : public SimulatorModel {
public:
  explicit GridToyModel(std::size_t length = 40, double length_scale = 5.0, double noise_sd = 0.1);

  std::string name() const override { return "grid_toy"; }
  std::size_t parameter_dim() const override { return length_; }
  std::size_t data_dim() const override { return length_; }
  void sample_prior(Rng& rng, std::span<double> theta) const override;
  void simulate(std::span<const double> theta, Rng& rng, std::span<double> y) const override;
  bool in_support(std::span<const double> theta) const override;
  std::optional<std::vector<std::size_t>> parameter_grid() const override;
  std::optional<double> log_likelihood(std::span<const double> theta,
                                       std::span<const double> y) const override;
  std::optional<Tensor> sample_exact_posterior(std::span<const double> y, std::size_t count,
                                               Rng& rng) const override;
  std::optional<std::vector<double>> posterior_mean(std::span<const double> y) const override;

  /// Prior covariance (length x length).
  const Tensor& prior_covariance() const noexcept { return covariance_; }
  /// Banded moving-average operator (length x length).
  const Tensor& forward_operator() const noexcept { return operator_; }

private:
  std::size_t length_;
  double length_scale_, noise_sd_;
  Tensor covariance_;
  Tensor cholesky_;
  Tensor operator_;
};

std::unique_ptr<SimulatorModel> make_model(const std::string& name);
std::vector<std::string> model_names();

struct Dataset {
  std::string model;
  std::uint64_t seed = 0;
  Tensor theta;  // n x parameter_dim
  Tensor y;      // n x data_dim

  std::size_t size() const noexcept { return theta.empty() ? 0 : theta.shape()[0]; }
  std::size_t parameter_dim() const noexcept { return theta.cols(); }
  std::size_t data_dim() const noexcept { return y.cols(); }
};

Tensor prior_sample(const SimulatorModel& model, std::size_t k, std::uint64_t seed);
/// One forward draw; throws SupportError outside the prior support.
Tensor simulate(const SimulatorModel& model, std::span<const double> theta, std::uint64_t seed);
/// n pairs; pair i uses its own seed derived from (seed, i).
Dataset generate_dataset(const SimulatorModel& model, std::size_t n, std::uint64_t seed);
/// Simulates y for given thetas with per-row derived seeds.
Dataset simulate_dataset(const SimulatorModel& model, const Tensor& thetas, std::uint64_t seed);

/// Exact posterior draws by rejection from the prior using the likelihood
/// bound. Throws if the model lacks a likelihood bound or the proposal budget runs out.
Tensor rejection_sample_posterior(const SimulatorModel& model, std::span<const double> y,
                                  std::size_t count, std::uint64_t seed,
                                  std::size_t max_proposals = 200'000'000);

/// Sampling-importance-resampling from the prior; approximate, for models
/// without a likelihood bound.
Tensor importance_resample_posterior(const SimulatorModel& model, std::span<const double> y,
                                     std::size_t count, std::size_t proposals, std::uint64_t seed);

/// Reference posterior draws: exact sampler, else rejection, else SIR.
Tensor reference_posterior(const SimulatorModel& model, std::span<const double> y, std::size_t count,
                           std::uint64_t seed);

}  // namespace srlfi
