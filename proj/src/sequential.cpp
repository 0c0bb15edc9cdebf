#include "srlfi/sequential.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "srlfi/errors.hpp"

namespace srlfi {

RatioEstimator::RatioEstimator(BinaryClassifier classifier, std::size_t n_num, std::size_t n_den)
    : classifier_(std::move(classifier)),
      log_prior_odds_(std::log(static_cast<double>(n_den) / static_cast<double>(n_num))) {}

RatioEstimator RatioEstimator::oracle(std::function<double(std::span<const double>)> log_ratio) {
  RatioEstimator r;
  r.oracle_ = std::move(log_ratio);
  return r;
}

double RatioEstimator::log_ratio(std::span<const double> theta) const {
  if (oracle_) return oracle_(theta);
  if (!classifier_) throw std::logic_error("ratio estimator is not fitted");
  return std::clamp(classifier_->logit(theta), -kLogitClamp, kLogitClamp) + log_prior_odds_;
}

double RatioEstimator::ratio(std::span<const double> theta) const { return std::exp(log_ratio(theta)); }

std::vector<double> RatioEstimator::ratios(const Tensor& thetas) const {
  std::vector<double> out(thetas.rows());
  if (classifier_ && !oracle_) {
    const auto logits = classifier_->logits(thetas);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = std::exp(std::clamp(logits[i], -kLogitClamp, kLogitClamp) + log_prior_odds_);
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ratio(thetas.row(i));
  return out;
}

RatioEstimator fit_ratio_classifier(const Tensor& samples_num, const Tensor& samples_den, std::uint64_t seed,
                                    const ClassifierOptions& options) {
  if (samples_num.empty() || samples_den.empty())
    throw std::invalid_argument("ratio classifier: both sample sets must be nonempty");
  if (samples_num.cols() != samples_den.cols()) throw ShapeError("ratio classifier: sample widths differ");
  const std::size_t a = samples_num.rows(), b = samples_den.rows(), d = samples_num.cols();
  Tensor features({a + b, d});
  std::vector<int> labels(a + b, 0);
  for (std::size_t i = 0; i < a; ++i) {
    std::copy_n(samples_num.row(i).begin(), d, features.row(i).begin());
    labels[i] = 1;
  }
  for (std::size_t i = 0; i < b; ++i) std::copy_n(samples_den.row(i).begin(), d, features.row(a + i).begin());
  return RatioEstimator(train_binary_classifier(features, labels, options, seed), a, b);
}

ad::Var weighted_sr_loss(const GeneratorNet& g, std::span<const ad::Var> weights, const Tensor& thetas,
                         const Tensor& ys, const ScoringRule& rule, std::size_t m, const RatioEstimator& ratio,
                         Rng& rng) {
  const auto w = ratio.ratios(thetas);
  return sr_batch_loss(g, weights, thetas, ys, rule, m, rng, w);
}

double ess_fraction(std::span<const double> weights) {
  if (weights.empty()) return 0.0;
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    s += w;
    s2 += w * w;
  }
  if (s2 == 0.0) return 0.0;
  return s * s / (static_cast<double>(weights.size()) * s2);
}

void RoundConfig::validate(const SimulatorModel& model) const {
  if (rounds < 1) throw std::invalid_argument("sequential: rounds must be >= 1");
  if (simulations_per_round == 0) throw std::invalid_argument("sequential: simulations per round must be >= 1");
  if (y0.size() != model.data_dim())
    throw ShapeError("sequential: y0 has " + std::to_string(y0.size()) + " entries, model data dim is " +
                     std::to_string(model.data_dim()));
  train.validate();
}

namespace {

double posterior_mean_error(const SimulatorModel& model, const GeneratorNet& g, std::span<const double> y0,
                            std::size_t count, std::uint64_t seed) {
  const auto exact = model.posterior_mean(y0);
  if (!exact) return std::numeric_limits<double>::quiet_NaN();
  const Tensor draws = sample_posterior(g, y0, count, seed);
  double err = 0.0;
  for (std::size_t c = 0; c < draws.cols(); ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < draws.rows(); ++i) s += draws.at(i, c);
    err += std::abs(s / static_cast<double>(draws.rows()) - (*exact)[c]);
  }
  return err / static_cast<double>(draws.cols());
}

double last_val_loss(const TrainResult& r) {
  if (r.history.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (r.best_epoch >= 1 && r.best_epoch <= r.history.size()) return r.history[r.best_epoch - 1].val_loss;
  return r.history.back().val_loss;
}

Tensor append_rows(const Tensor& a, const Tensor& b) {
  if (a.empty()) return b;
  Tensor out({a.rows() + b.rows(), a.cols()});
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

}  // namespace

SequentialResult run_sequential(const SimulatorModel& model, const RoundConfig& config) {
  config.validate(model);
  const std::size_t n = config.simulations_per_round;
  const std::uint64_t diag_seed = derive_seed(config.seed, "diagnostics");
  SequentialResult result;

  Dataset pool = generate_dataset(model, n, derive_seed(config.seed, "round-1"));
  GeneratorNet g =
      make_generator(model.parameter_dim(), model.data_dim(), config.generator, derive_seed(config.seed, "generator"));
  TrainResult trained = train_sr(std::move(g), pool, config.train);
  g = trained.generator;
  result.generators.push_back(g);
  result.diagnostics.push_back({1, 1.0, last_val_loss(trained),
                                posterior_mean_error(model, g, config.y0, config.diagnostic_samples, diag_seed)});

  for (std::size_t round = 2; round <= config.rounds; ++round) {
    const std::uint64_t round_seed = derive_seed(config.seed, round);
    const Tensor proposals = sample_posterior(g, config.y0, n, derive_seed(round_seed, "proposal"));

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < n; ++i)
      if (model.in_support(proposals.row(i))) kept.push_back(i);
    if (kept.empty())
      throw WeightDegeneracyError("sequential round " + std::to_string(round) +
                                  ": every proposal lies outside the prior support (ESS 0)");

    const Dataset fresh = simulate_dataset(model, gather_rows(proposals, kept), derive_seed(round_seed, "simulate"));
    pool.theta = append_rows(pool.theta, fresh.theta);
    pool.y = append_rows(pool.y, fresh.y);

    const Tensor prior_draws = prior_sample(model, pool.size(), derive_seed(round_seed, "prior"));
    const RatioEstimator ratio =
        fit_ratio_classifier(prior_draws, pool.theta, derive_seed(round_seed, "classifier"), config.classifier);

    // Out-of-support proposals enter the ESS with weight zero.
    const auto fresh_w = ratio.ratios(fresh.theta);
    std::vector<double> round_w(n, 0.0);
    for (std::size_t i = 0; i < kept.size(); ++i) round_w[kept[i]] = fresh_w[i];
    const double ess = ess_fraction(round_w);
    if (ess < config.min_ess_fraction)
      throw WeightDegeneracyError("sequential round " + std::to_string(round) + ": effective sample size " +
                                  std::to_string(ess * 100.0) + "% is below " +
                                  std::to_string(config.min_ess_fraction * 100.0) + "%");

    const auto weights = ratio.ratios(pool.theta);
    SRTrainConfig cfg = config.train;
    cfg.seed = derive_seed(round_seed, "train");
    trained = train_sr(std::move(g), pool, cfg, weights);
    g = trained.generator;
    result.generators.push_back(g);
    result.diagnostics.push_back(
        {round, ess, last_val_loss(trained),
         posterior_mean_error(model, g, config.y0, config.diagnostic_samples, diag_seed)});
  }
  return result;
}

void write_round_diagnostics(std::ostream& out, std::span<const RoundDiagnostics> rows) {
  out << "round,ess_fraction,val_loss,posterior_mean_error\n";
  const auto precision = out.precision(17);
  for (const auto& r : rows)
    out << r.round << ',' << r.ess_fraction << ',' << r.val_loss << ',' << r.posterior_mean_error << '\n';
  out.precision(precision);
}

}  // namespace srlfi
