#include "srlfi/simulators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "srlfi/errors.hpp"

namespace srlfi {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix to_eigen(const Tensor& t) {
  return Eigen::Map<const Matrix>(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                                  static_cast<Eigen::Index>(t.cols()));
}

Tensor from_eigen(const Matrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  Eigen::Map<Matrix>(t.values().data(), m.rows(), m.cols()) = m;
  return t;
}

constexpr double kLogTwoPi = 1.8378770664093453;

double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * kLogTwoPi;
}

void require_dim(std::span<const double> v, std::size_t dim, const char* what) {
  if (v.size() != dim)
    throw ShapeError(std::string(what) + " has " + std::to_string(v.size()) + " entries, expected " +
                     std::to_string(dim));
}

bool in_box(std::span<const double> theta, double lo, double hi) {
  return std::all_of(theta.begin(), theta.end(), [&](double v) { return v >= lo && v <= hi; });
}

}  // namespace

std::optional<double> SimulatorModel::log_likelihood(std::span<const double>,
                                                     std::span<const double>) const {
  return std::nullopt;
}

std::optional<double> SimulatorModel::log_likelihood_bound(std::span<const double>) const {
  return std::nullopt;
}

std::optional<Tensor> SimulatorModel::sample_exact_posterior(std::span<const double>, std::size_t,
                                                             Rng&) const {
  return std::nullopt;
}

std::optional<std::vector<double>> SimulatorModel::posterior_mean(std::span<const double>) const {
  return std::nullopt;
}

GaussianPosterior analytic_posterior_gaussian(double prior_mean, double prior_sd, double noise_sd,
                                              double y) {
  if (!(prior_sd > 0.0) || !(noise_sd > 0.0))
    throw std::invalid_argument("analytic posterior: standard deviations must be positive");
  const double v0 = prior_sd * prior_sd;
  const double v = noise_sd * noise_sd;
  return {(v0 * y + v * prior_mean) / (v0 + v), std::sqrt(v0 * v / (v0 + v))};
}

// --- conjugate Gaussian -----------------------------------------------------

ConjugateGaussianModel::ConjugateGaussianModel(double prior_mean, double prior_sd, double noise_sd)
    : prior_mean_(prior_mean), prior_sd_(prior_sd), noise_sd_(noise_sd) {
  if (!(prior_sd > 0.0) || !(noise_sd >= 0.0))
    throw std::invalid_argument("conjugate gaussian: prior sd must be positive, noise sd non-negative");
}

void ConjugateGaussianModel::sample_prior(Rng& rng, std::span<double> theta) const {
  require_dim(theta, 1, "theta");
  theta[0] = std::normal_distribution<double>(prior_mean_, prior_sd_)(rng);
}

void ConjugateGaussianModel::simulate(std::span<const double> theta, Rng& rng,
                                      std::span<double> y) const {
  require_dim(theta, 1, "theta");
  require_dim(y, 1, "y");
  y[0] = theta[0] + noise_sd_ * std::normal_distribution<double>(0.0, 1.0)(rng);
}

bool ConjugateGaussianModel::in_support(std::span<const double> theta) const {
  return theta.size() == 1 && std::isfinite(theta[0]);
}

std::optional<double> ConjugateGaussianModel::log_likelihood(std::span<const double> theta,
                                                             std::span<const double> y) const {
  if (noise_sd_ == 0.0) return std::nullopt;
  return normal_logpdf(y[0], theta[0], noise_sd_);
}

GaussianPosterior ConjugateGaussianModel::posterior(double y) const {
  return analytic_posterior_gaussian(prior_mean_, prior_sd_, noise_sd_, y);
}

std::optional<Tensor> ConjugateGaussianModel::sample_exact_posterior(std::span<const double> y,
                                                                     std::size_t count,
                                                                     Rng& rng) const {
  require_dim(y, 1, "y");
  if (noise_sd_ == 0.0) return Tensor({count, 1}, y[0]);
  const auto post = posterior(y[0]);
  std::normal_distribution<double> normal(post.mean, post.sd);
  Tensor out({count, 1});
  for (double& v : out.values()) v = normal(rng);
  return out;
}

std::optional<std::vector<double>> ConjugateGaussianModel::posterior_mean(
    std::span<const double> y) const {
  if (noise_sd_ == 0.0) return std::vector<double>{y[0]};
  return std::vector<double>{posterior(y[0]).mean};
}

// --- Two Moons --------------------------------------------------------------

void TwoMoonsModel::sample_prior(Rng& rng, std::span<double> theta) const {
  require_dim(theta, 2, "theta");
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (double& v : theta) v = unif(rng);
}

void TwoMoonsModel::simulate(std::span<const double> theta, Rng& rng, std::span<double> y) const {
  require_dim(theta, 2, "theta");
  require_dim(y, 2, "y");
  const double a = std::uniform_real_distribution<double>(-std::numbers::pi / 2, std::numbers::pi / 2)(rng);
  const double r = std::normal_distribution<double>(kRadiusMean, kRadiusSd)(rng);
  const double px = r * std::cos(a) + kOffset;
  const double py = r * std::sin(a);
  y[0] = px - std::abs(theta[0] + theta[1]) / std::numbers::sqrt2;
  y[1] = py + (-theta[0] + theta[1]) / std::numbers::sqrt2;
}

bool TwoMoonsModel::in_support(std::span<const double> theta) const {
  return theta.size() == 2 && in_box(theta, -1.0, 1.0);
}

std::optional<Box> TwoMoonsModel::prior_box() const { return Box{{-1.0, -1.0}, {1.0, 1.0}}; }

std::optional<double> TwoMoonsModel::log_likelihood(std::span<const double> theta,
                                                    std::span<const double> y) const {
  require_dim(theta, 2, "theta");
  require_dim(y, 2, "y");
  // Undo the theta shift, then the crescent point p - (offset, 0) = r (cos a, sin a)
  // with a in (-pi/2, pi/2); the polar change of variables contributes 1 / (pi r).
  const double ux = y[0] + std::abs(theta[0] + theta[1]) / std::numbers::sqrt2 - kOffset;
  const double uy = y[1] - (-theta[0] + theta[1]) / std::numbers::sqrt2;
  if (!(ux > 0.0)) return -std::numeric_limits<double>::infinity();
  const double r = std::hypot(ux, uy);
  return normal_logpdf(r, kRadiusMean, kRadiusSd) - std::log(std::numbers::pi) - std::log(r);
}

std::optional<double> TwoMoonsModel::log_likelihood_bound(std::span<const double>) const {
  // Maximizer of N(r; mu, sd) / r solves r^2 - mu r + sd^2 = 0.
  const double r = 0.5 * (kRadiusMean + std::sqrt(kRadiusMean * kRadiusMean - 4.0 * kRadiusSd * kRadiusSd));
  return normal_logpdf(r, kRadiusMean, kRadiusSd) - std::log(std::numbers::pi) - std::log(r);
}

// --- SLCP -------------------------------------------------------------------

void SlcpModel::sample_prior(Rng& rng, std::span<double> theta) const {
  require_dim(theta, 5, "theta");
  std::uniform_real_distribution<double> unif(-3.0, 3.0);
  for (double& v : theta) v = unif(rng);
}

std::vector<double> SlcpModel::covariance(std::span<const double> theta) {
  const double s1 = theta[2] * theta[2];
  const double s2 = theta[3] * theta[3];
  const double rho = std::tanh(theta[4]);
  return {s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2};
}

void SlcpModel::simulate(std::span<const double> theta, Rng& rng, std::span<double> y) const {
  require_dim(theta, 5, "theta");
  require_dim(y, 8, "y");
  const double s1 = theta[2] * theta[2];
  const double s2 = theta[3] * theta[3];
  const double rho = std::tanh(theta[4]);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < 4; ++k) {
    const double z1 = normal(rng);
    const double z2 = normal(rng);
    y[2 * k] = theta[0] + s1 * z1;
    y[2 * k + 1] = theta[1] + s2 * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2);
  }
}

bool SlcpModel::in_support(std::span<const double> theta) const {
  return theta.size() == 5 && in_box(theta, -3.0, 3.0);
}

std::optional<Box> SlcpModel::prior_box() const {
  return Box{std::vector<double>(5, -3.0), std::vector<double>(5, 3.0)};
}

std::optional<double> SlcpModel::log_likelihood(std::span<const double> theta,
                                                std::span<const double> y) const {
  require_dim(theta, 5, "theta");
  require_dim(y, 8, "y");
  const double s1 = theta[2] * theta[2];
  const double s2 = theta[3] * theta[3];
  const double rho = std::tanh(theta[4]);
  const double one_minus = 1.0 - rho * rho;
  if (s1 == 0.0 || s2 == 0.0 || one_minus <= 0.0) return -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double a = (y[2 * k] - theta[0]) / s1;
    const double b = (y[2 * k + 1] - theta[1]) / s2;
    const double quad = (a * a - 2.0 * rho * a * b + b * b) / one_minus;
    total += -0.5 * quad - std::log(s1) - std::log(s2) - 0.5 * std::log(one_minus) - kLogTwoPi;
  }
  return total;
}

// --- grid toy ---------------------------------------------------------------

GridToyModel::GridToyModel(std::size_t length, double length_scale, double noise_sd)
    : length_(length), length_scale_(length_scale), noise_sd_(noise_sd) {
  if (length < 2 || !(length_scale > 0.0) || !(noise_sd > 0.0))
    throw std::invalid_argument("grid toy: invalid configuration");
  const auto n = static_cast<Eigen::Index>(length);
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = static_cast<double>(i - j);
      k(i, j) = std::exp(-d * d / (2.0 * length_scale * length_scale));
    }
  // Jitter keeps the squared-exponential Gram matrix numerically positive definite.
  k.diagonal().array() += 1e-6;
  Matrix a = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - 1);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + 1);
    for (Eigen::Index j = lo; j <= hi; ++j) a(i, j) = 1.0 / static_cast<double>(hi - lo + 1);
  }
  covariance_ = from_eigen(k);
  cholesky_ = from_eigen(Matrix(k.llt().matrixL()));
  operator_ = from_eigen(a);
}

void GridToyModel::sample_prior(Rng& rng, std::span<double> theta) const {
  require_dim(theta, length_, "theta");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(length_);
  for (double& v : z) v = normal(rng);
  for (std::size_t i = 0; i < length_; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j <= i; ++j) acc += cholesky_.at(i, j) * z[j];
    theta[i] = acc;
  }
}

void GridToyModel::simulate(std::span<const double> theta, Rng& rng, std::span<double> y) const {
  require_dim(theta, length_, "theta");
  require_dim(y, length_, "y");
  std::normal_distribution<double> normal(0.0, noise_sd_);
  for (std::size_t i = 0; i < length_; ++i) {
    double acc = 0.0;
    for (std::size_t j = (i ? i - 1 : 0); j < std::min(length_, i + 2); ++j) acc += operator_.at(i, j) * theta[j];
    y[i] = acc + normal(rng);
  }
}

bool GridToyModel::in_support(std::span<const double> theta) const {
  return theta.size() == length_ &&
         std::all_of(theta.begin(), theta.end(), [](double v) { return std::isfinite(v); });
}

std::optional<std::vector<std::size_t>> GridToyModel::parameter_grid() const {
  return std::vector<std::size_t>{length_};
}

std::optional<double> GridToyModel::log_likelihood(std::span<const double> theta,
                                                   std::span<const double> y) const {
  double total = 0.0;
  for (std::size_t i = 0; i < length_; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < length_; ++j) acc += operator_.at(i, j) * theta[j];
    total += normal_logpdf(y[i], acc, noise_sd_);
  }
  return total;
}

namespace {

struct LinearGaussianPosterior {
  Eigen::VectorXd mean;
  Matrix chol;
};

LinearGaussianPosterior grid_posterior(const Tensor& cov, const Tensor& op, double noise_sd,
                                       std::span<const double> y) {
  const Matrix k = to_eigen(cov);
  const Matrix a = to_eigen(op);
  const auto n = k.rows();
  Matrix s = a * k * a.transpose();
  s.diagonal().array() += noise_sd * noise_sd;
  const Matrix gain = (s.llt().solve(a * k)).transpose();  // K A^T S^-1
  Matrix post = k - gain * a * k;
  post = 0.5 * (post + post.transpose());
  post.diagonal().array() += 1e-10;
  Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  return {gain * yv, Matrix(post.llt().matrixL())};
}

}  // namespace

std::optional<Tensor> GridToyModel::sample_exact_posterior(std::span<const double> y,
                                                           std::size_t count, Rng& rng) const {
  require_dim(y, length_, "y");
  const auto post = grid_posterior(covariance_, operator_, noise_sd_, y);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor out({count, length_});
  Eigen::VectorXd z(static_cast<Eigen::Index>(length_));
  for (std::size_t r = 0; r < count; ++r) {
    for (auto& v : z) v = normal(rng);
    Eigen::VectorXd draw = post.mean + post.chol * z;
    std::copy(draw.begin(), draw.end(), out.row(r).begin());
  }
  return out;
}

std::optional<std::vector<double>> GridToyModel::posterior_mean(std::span<const double> y) const {
  require_dim(y, length_, "y");
  const auto post = grid_posterior(covariance_, operator_, noise_sd_, y);
  return std::vector<double>(post.mean.begin(), post.mean.end());
}

// --- factory and datasets ---------------------------------------------------

std::unique_ptr<SimulatorModel> make_model(const std::string& name) {
  if (name == "conjugate_gaussian") return std::make_unique<ConjugateGaussianModel>();
  if (name == "two_moons") return std::make_unique<TwoMoonsModel>();
  if (name == "slcp") return std::make_unique<SlcpModel>();
  if (name == "grid_toy") return std::make_unique<GridToyModel>();
  throw std::invalid_argument("unknown model '" + name + "'");
}

std::vector<std::string> model_names() { return {"conjugate_gaussian", "two_moons", "slcp", "grid_toy"}; }

Tensor prior_sample(const SimulatorModel& model, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("prior_sample: k must be >= 1");
  Rng rng(seed);
  Tensor out({k, model.parameter_dim()});
  for (std::size_t i = 0; i < k; ++i) model.sample_prior(rng, out.row(i));
  return out;
}

Tensor simulate(const SimulatorModel& model, std::span<const double> theta, std::uint64_t seed) {
  if (!model.in_support(theta))
    throw SupportError(model.name() + ": parameter outside prior support");
  Rng rng(seed);
  Tensor y({model.data_dim()});
  model.simulate(theta, rng, y.values());
  return y;
}

Dataset simulate_dataset(const SimulatorModel& model, const Tensor& thetas, std::uint64_t seed) {
  if (thetas.rank() != 2 || thetas.cols() != model.parameter_dim())
    throw ShapeError("simulate_dataset: thetas " + shape_string(thetas.shape()) +
                     " do not match parameter dim " + std::to_string(model.parameter_dim()));
  const std::size_t n = thetas.rows();
  Dataset data{model.name(), seed, thetas, Tensor({n, model.data_dim()})};
  for (std::size_t i = 0; i < n; ++i) {
    if (!model.in_support(thetas.row(i)))
      throw SupportError(model.name() + ": parameter row " + std::to_string(i) + " outside prior support");
    Rng rng(derive_seed(seed, i));
    model.simulate(thetas.row(i), rng, data.y.row(i));
  }
  return data;
}

Dataset generate_dataset(const SimulatorModel& model, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("generate_dataset: n must be >= 1");
  Dataset data{model.name(), seed, Tensor({n, model.parameter_dim()}), Tensor({n, model.data_dim()})};
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    model.sample_prior(rng, data.theta.row(i));
    model.simulate(data.theta.row(i), rng, data.y.row(i));
  }
  return data;
}

Tensor rejection_sample_posterior(const SimulatorModel& model, std::span<const double> y,
                                  std::size_t count, std::uint64_t seed, std::size_t max_proposals) {
  const auto bound = model.log_likelihood_bound(y);
  if (!bound) throw std::invalid_argument(model.name() + ": no likelihood bound for rejection sampling");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Tensor out({count, model.parameter_dim()});
  std::vector<double> theta(model.parameter_dim());
  std::size_t accepted = 0;
  for (std::size_t tried = 0; accepted < count; ++tried) {
    if (tried >= max_proposals)
      throw std::runtime_error(model.name() + ": rejection sampler exhausted its proposal budget");
    model.sample_prior(rng, theta);
    const double ll = *model.log_likelihood(theta, y);
    if (std::log(unif(rng)) < ll - *bound) {
      std::copy(theta.begin(), theta.end(), out.row(accepted).begin());
      ++accepted;
    }
  }
  return out;
}

Tensor importance_resample_posterior(const SimulatorModel& model, std::span<const double> y,
                                     std::size_t count, std::size_t proposals, std::uint64_t seed) {
  Rng rng(seed);
  const Tensor candidates = prior_sample(model, proposals, derive_seed(seed, "proposals"));
  std::vector<double> logw(proposals);
  for (std::size_t i = 0; i < proposals; ++i) {
    const auto ll = model.log_likelihood(candidates.row(i), y);
    if (!ll) throw std::invalid_argument(model.name() + ": no tractable likelihood for SIR");
    logw[i] = *ll;
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  if (!std::isfinite(top)) throw std::runtime_error(model.name() + ": all importance weights vanish");
  std::vector<double> w(proposals);
  for (std::size_t i = 0; i < proposals; ++i) w[i] = std::exp(logw[i] - top);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  Tensor out({count, model.parameter_dim()});
  for (std::size_t r = 0; r < count; ++r) {
    auto src = candidates.row(pick(rng));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Tensor reference_posterior(const SimulatorModel& model, std::span<const double> y, std::size_t count,
                           std::uint64_t seed) {
  Rng rng(seed);
  if (auto exact = model.sample_exact_posterior(y, count, rng)) return *exact;
  if (model.log_likelihood_bound(y)) return rejection_sample_posterior(model, y, count, seed);
  return importance_resample_posterior(model, y, count, 1'000'000, seed);
}

}  // namespace srlfi
