#include "srlfi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "srlfi/errors.hpp"

namespace srlfi {

namespace {

void require_same_length(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) throw ShapeError(std::string(what) + ": truths and predictions differ in length");
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

NrmseResult nrmse(std::span<const double> truths, std::span<const double> predictions) {
  require_same_length(truths, predictions, "nrmse");
  if (truths.size() < 2) throw std::invalid_argument("nrmse: need at least two pairs");
  double sq = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) sq += (truths[i] - predictions[i]) * (truths[i] - predictions[i]);
  const double rmse = std::sqrt(sq / static_cast<double>(truths.size()));
  const auto [lo, hi] = std::minmax_element(truths.begin(), truths.end());
  const double range = *hi - *lo;
  if (range == 0.0) return {rmse, false};
  return {rmse / range, true};
}

double r_squared(std::span<const double> truths, std::span<const double> predictions) {
  require_same_length(truths, predictions, "r_squared");
  if (truths.empty()) throw std::invalid_argument("r_squared: empty input");
  const double mu = mean_of(truths);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    ss_res += (truths[i] - predictions[i]) * (truths[i] - predictions[i]);
    ss_tot += (truths[i] - mu) * (truths[i] - mu);
  }
  if (ss_tot == 0.0) throw DomainError("r_squared: truths are all equal");
  return 1.0 - ss_res / ss_tot;
}

std::vector<double> calibration_alpha_grid() {
  std::vector<double> grid(100);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<double>(i + 1) / 101.0;
  return grid;
}

std::pair<double, double> central_interval(std::span<const double> sorted, double alpha) {
  if (sorted.empty()) throw std::invalid_argument("interval of empty sample");
  const std::size_t last = sorted.size() - 1;
  // Round the interpolation positions outward so both ends are order statistics.
  const auto lo = static_cast<std::size_t>(std::floor(std::clamp((1.0 - alpha) / 2.0, 0.0, 0.5) * static_cast<double>(last)));
  return {sorted[lo], sorted[last - lo]};
}

namespace {

std::vector<std::vector<double>> sorted_copies(std::span<const std::vector<double>> samples) {
  std::vector<std::vector<double>> out(samples.begin(), samples.end());
  for (auto& s : out) std::sort(s.begin(), s.end());
  return out;
}

double coverage_sorted(std::span<const double> truths, const std::vector<std::vector<double>>& sorted,
                       double alpha) {
  std::size_t inside = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const auto [lo, hi] = central_interval(sorted[i], alpha);
    if (truths[i] >= lo && truths[i] <= hi) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(truths.size());
}

void check_calibration_inputs(std::span<const double> truths, std::span<const std::vector<double>> samples) {
  if (truths.empty() || truths.size() != samples.size())
    throw ShapeError("calibration: one sample set per truth required");
  for (const auto& s : samples)
    if (s.empty()) throw ShapeError("calibration: empty sample set");
}

}  // namespace

double empirical_coverage(std::span<const double> truths, std::span<const std::vector<double>> samples,
                          double alpha) {
  check_calibration_inputs(truths, samples);
  return coverage_sorted(truths, sorted_copies(samples), alpha);
}

double calibration_error(std::span<const double> truths, std::span<const std::vector<double>> samples) {
  check_calibration_inputs(truths, samples);
  const auto sorted = sorted_copies(samples);
  std::vector<double> gaps;
  for (double alpha : calibration_alpha_grid())
    gaps.push_back(std::abs(coverage_sorted(truths, sorted, alpha) - alpha));
  std::sort(gaps.begin(), gaps.end());
  const std::size_t h = gaps.size() / 2;
  return 0.5 * (gaps[h - 1] + gaps[h]);
}

SBCResult sbc_ranks(const SimulatorModel& model, const PosteriorSampler& sampler, std::size_t n_priors,
                    std::size_t N, std::uint64_t seed) {
  if (N < 10) throw std::invalid_argument("sbc: N must be >= 10");
  if (n_priors == 0) throw std::invalid_argument("sbc: need at least one prior draw");
  const std::size_t p = model.parameter_dim();
  SBCResult result;
  result.N = N;
  result.ranks.assign(p, std::vector<std::size_t>(n_priors, 0));
  std::vector<double> theta(p), y(model.data_dim());
  for (std::size_t k = 0; k < n_priors; ++k) {
    Rng rng(derive_seed(derive_seed(seed, "sbc"), k));
    model.sample_prior(rng, theta);
    model.simulate(theta, rng, y);
    const Tensor draws = sampler(y, N, derive_seed(derive_seed(seed, "sbc-posterior"), k));
    if (draws.rows() != N || draws.cols() != p)
      throw ShapeError("sbc: sampler returned " + shape_string(draws.shape()));
    for (std::size_t c = 0; c < p; ++c) {
      std::size_t r = 0;
      for (std::size_t i = 0; i < N; ++i)
        if (draws.at(i, c) < theta[c]) ++r;
      result.ranks[c][k] = r;
    }
  }
  return result;
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  // The alternating series converges slowly for small lambda, where Q is 1
  // to double precision anyway.
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-300) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_uniform_ranks(std::span<const std::size_t> ranks, std::size_t N) {
  if (ranks.empty()) throw std::invalid_argument("ks: no ranks");
  std::vector<std::size_t> counts(N + 1, 0);
  for (std::size_t r : ranks) {
    if (r > N) throw DomainError("ks: rank " + std::to_string(r) + " exceeds N = " + std::to_string(N));
    ++counts[r];
  }
  const double n = static_cast<double>(ranks.size());
  double cum = 0.0, d = 0.0;
  for (std::size_t k = 0; k <= N; ++k) {
    cum += static_cast<double>(counts[k]);
    d = std::max(d, std::abs(cum / n - static_cast<double>(k + 1) / static_cast<double>(N + 1)));
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

double c2st_accuracy(const Tensor& samples_p, const Tensor& samples_q, std::uint64_t seed,
                     const C2stOptions& options) {
  if (samples_p.rank() != 2 || samples_q.rank() != 2 || samples_p.cols() != samples_q.cols())
    throw ShapeError("c2st: sample sets must be matrices of equal width");
  if (options.folds < 2) throw std::invalid_argument("c2st: need at least two folds");
  const std::size_t np = samples_p.rows(), nq = samples_q.rows(), d = samples_p.cols();
  const std::size_t n = np + nq;
  if (np < options.folds || nq < options.folds) throw std::invalid_argument("c2st: too few samples for the folds");

  Tensor features({n, d});
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < np; ++i) {
    std::copy_n(samples_p.row(i).begin(), d, features.row(i).begin());
    labels[i] = 0;
  }
  for (std::size_t i = 0; i < nq; ++i) {
    std::copy_n(samples_q.row(i).begin(), d, features.row(np + i).begin());
    labels[np + i] = 1;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "c2st-folds"));
  std::shuffle(order.begin(), order.end(), rng);

  ClassifierOptions clf;
  clf.hidden = {10 * d, 10 * d};
  clf.activation = Activation::relu;
  clf.max_epochs = options.max_epochs;
  clf.batch_size = options.batch_size;
  clf.learning_rate = options.learning_rate;
  clf.tolerance = options.tolerance;
  clf.patience = options.patience;

  double accuracy = 0.0;
  for (std::size_t fold = 0; fold < options.folds; ++fold) {
    const std::size_t begin = fold * n / options.folds, end = (fold + 1) * n / options.folds;
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < n; ++i) (i >= begin && i < end ? test_idx : train_idx).push_back(order[i]);
    std::vector<int> train_labels;
    for (std::size_t i : train_idx) train_labels.push_back(labels[i]);
    const auto model = train_binary_classifier(gather_rows(features, train_idx), train_labels, clf,
                                               derive_seed(seed, fold));
    const auto logits = model.logits(gather_rows(features, test_idx));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_idx.size(); ++i)
      if ((logits[i] > 0.0 ? 1 : 0) == labels[test_idx[i]]) ++correct;
    accuracy += static_cast<double>(correct) / static_cast<double>(test_idx.size());
  }
  return accuracy / static_cast<double>(options.folds);
}

void EvaluationSet::validate() const {
  if (samples.empty()) throw ShapeError("evaluation set: no pairs");
  if (theta.rows() != samples.size()) throw ShapeError("evaluation set: one sample matrix per truth required");
  const std::size_t k = samples.front().rows();
  for (const auto& s : samples)
    if (s.rows() != k || s.cols() != theta.cols())
      throw ShapeError("evaluation set: sample matrices must share shape " + std::to_string(k) + " x " +
                       std::to_string(theta.cols()));
}

EvaluationSet make_evaluation_set(const Dataset& test, const PosteriorSampler& sampler, std::size_t n_post,
                                  std::uint64_t seed) {
  EvaluationSet eval;
  eval.theta = test.theta;
  eval.y = test.y;
  for (std::size_t i = 0; i < test.size(); ++i)
    eval.samples.push_back(sampler(test.y.row(i), n_post, derive_seed(seed, i)));
  eval.validate();
  return eval;
}

PosteriorSampler generator_sampler(const GeneratorNet& g) {
  return [g](std::span<const double> y, std::size_t count, std::uint64_t seed) {
    return sample_posterior(g, y, count, seed);
  };
}

MetricsReport evaluate_metrics(const EvaluationSet& eval) {
  eval.validate();
  const std::size_t n = eval.size(), p = eval.theta.cols(), k = eval.n_post();
  MetricsReport report;
  for (std::size_t c = 0; c < p; ++c) {
    std::vector<double> truths(n), means(n);
    std::vector<std::vector<double>> marginals(n, std::vector<double>(k));
    for (std::size_t i = 0; i < n; ++i) {
      truths[i] = eval.theta.at(i, c);
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        marginals[i][j] = eval.samples[i].at(j, c);
        s += marginals[i][j];
      }
      means[i] = s / static_cast<double>(k);
    }
    const auto nr = nrmse(truths, means);
    report.nrmse.push_back(nr.value);
    report.nrmse_normalized.push_back(nr.normalized);
    double r2 = std::numeric_limits<double>::quiet_NaN();
    try {
      r2 = r_squared(truths, means);
    } catch (const DomainError&) {
    }
    report.r2.push_back(r2);
    report.calibration.push_back(calibration_error(truths, marginals));
  }
  report.mean_nrmse = mean_of(report.nrmse);
  report.mean_r2 = mean_of(report.r2);
  report.mean_calibration = mean_of(report.calibration);
  return report;
}

}  // namespace srlfi
