#include "srlfi/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "srlfi/errors.hpp"

namespace srlfi {

// --- optimizer --------------------------------------------------------------

AdamState make_adam_state(const Weights& weights) {
  AdamState state;
  for (const auto& w : weights) {
    state.first_moment.emplace_back(w.shape(), 0.0);
    state.second_moment.emplace_back(w.shape(), 0.0);
  }
  return state;
}

void adam_update(Weights& weights, std::span<const Tensor> grads, AdamState& state,
                 const AdamOptions& options) {
  if (grads.size() != weights.size() || state.first_moment.size() != weights.size())
    throw ShapeError("adam: weights, gradients and moments differ in count");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    Tensor& w = weights[k];
    const Tensor& g = grads[k];
    if (g.shape() != w.shape())
      throw ShapeError("adam: gradient " + shape_string(g.shape()) + " does not match weight " +
                       shape_string(w.shape()));
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

bool early_stop_check(EarlyStopState& state, double val_loss, std::size_t patience) {
  if (patience == 0) throw std::invalid_argument("early stopping: patience must be >= 1");
  ++state.checks;
  if (val_loss < state.best - kMinImprovement) {
    state.best = val_loss;
    state.best_check = state.checks;
    state.since_improvement = 0;
    return false;
  }
  return ++state.since_improvement >= patience;
}

// --- helpers ----------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

Split split_indices(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t n_val = 0;
  if (fraction > 0.0 && n >= 2)
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))), 1, n - 1);
  if (n_val == 0) return {order, {}};
  Rng rng(derive_seed(seed, "split"));
  std::shuffle(order.begin(), order.end(), rng);
  Split s;
  s.validation.assign(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  s.train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

std::vector<Tensor> collect_grads(const ad::GradientMap& grads, std::span<const ad::Var> vars) {
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(grads.at(v));
  return out;
}

std::vector<double> gather(std::span<const double> values, std::span<const std::size_t> idx) {
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = values[idx[i]];
  return out;
}

void require_finite(double loss, std::size_t epoch, std::size_t batch, const char* what) {
  if (std::isfinite(loss)) return;
  std::ostringstream msg;
  msg << what << " is non-finite (" << loss << ") at epoch " << epoch << ", batch " << batch;
  throw NumericError(msg.str(), epoch, batch);
}

}  // namespace

// --- scoring-rule training --------------------------------------------------

void SRTrainConfig::validate() const {
  if (m < 2) throw std::invalid_argument("SR training: m must be >= 2 (unbiased estimators need two draws)");
  if (batch_size == 0) throw std::invalid_argument("SR training: batch size must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("SR training: learning rate must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("SR training: validation fraction must lie in [0, 1)");
  if (early_stopping.enabled && !(validation_fraction > 0.0))
    throw std::invalid_argument("SR training: early stopping needs a validation fraction in (0, 1)");
  if (early_stopping.enabled && early_stopping.patience == 0)
    throw std::invalid_argument("SR training: patience must be >= 1");
}

ad::Var sr_batch_loss(const GeneratorNet& g, std::span<const ad::Var> weights, const Tensor& thetas,
                      const Tensor& ys, const ScoringRule& rule, std::size_t m, const Tensor& latents,
                      std::span<const double> pair_weights) {
  if (m < 2) throw std::invalid_argument("sr_batch_loss: m must be >= 2");
  if (thetas.rank() != 2 || ys.rank() != 2 || thetas.rows() != ys.rows() || thetas.rows() == 0)
    throw ShapeError("sr_batch_loss: thetas " + shape_string(thetas.shape()) + " and ys " +
                     shape_string(ys.shape()) + " must be non-empty with equal row counts");
  const std::size_t batch = thetas.rows();
  if (!pair_weights.empty() && pair_weights.size() != batch)
    throw ShapeError("sr_batch_loss: one weight per pair required");
  if (latents.rows() != batch * m)
    throw ShapeError("sr_batch_loss: expected " + std::to_string(batch * m) + " latent rows, got " +
                     std::to_string(latents.rows()));
  Tensor conditions({batch * m, ys.cols()});
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < m; ++j)
      std::copy_n(ys.row(i).begin(), ys.cols(), conditions.row(i * m + j).begin());
  ad::Var draws = generator_forward(g, weights, latents, conditions);
  ad::Var total;
  for (std::size_t i = 0; i < batch; ++i) {
    ad::Var s = score_estimate(rule, ad::slice_rows(draws, i * m, m),
                               Tensor::vector({thetas.row(i).begin(), thetas.row(i).end()}));
    if (!pair_weights.empty()) s = ad::scale(s, pair_weights[i]);
    total = total.valid() ? total + s : s;
  }
  return ad::scale(total, 1.0 / static_cast<double>(batch));
}

ad::Var sr_batch_loss(const GeneratorNet& g, std::span<const ad::Var> weights, const Tensor& thetas,
                      const Tensor& ys, const ScoringRule& rule, std::size_t m, Rng& rng,
                      std::span<const double> pair_weights) {
  return sr_batch_loss(g, weights, thetas, ys, rule, m, draw_latents(g.latent, thetas.rows() * m, rng),
                       pair_weights);
}

ScoringRule resolve_bandwidth(const ScoringRule& rule, const Tensor& reference_thetas) {
  ScoringRule out = rule;
  auto fix = [&](KernelScoreParams& k) {
    if (!(k.gamma > 0.0)) k.gamma = median_bandwidth(reference_thetas);
  };
  if (auto* k = std::get_if<KernelScoreParams>(&out)) fix(*k);
  if (auto* p = std::get_if<PatchedScoreParams>(&out))
    if (auto* k = std::get_if<KernelScoreParams>(&p->base)) fix(*k);
  return out;
}

double evaluate_sr_loss(const GeneratorNet& g, const Tensor& thetas, const Tensor& ys,
                        const ScoringRule& rule, std::size_t m, std::uint64_t seed,
                        std::span<const double> pair_weights, std::size_t chunk) {
  const std::size_t n = thetas.rows();
  Rng rng(seed);
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), start);
    ad::Tape tape;
    auto w = register_weights(tape, g.weights, false);
    std::vector<double> pw;
    if (!pair_weights.empty()) pw = gather(pair_weights, idx);
    const double loss =
        sr_batch_loss(g, w, gather_rows(thetas, idx), gather_rows(ys, idx), rule, m, rng, pw).value().item();
    total += loss * static_cast<double>(count);
  }
  return total / static_cast<double>(n);
}

TrainResult train_sr(GeneratorNet g, const Dataset& data, const SRTrainConfig& config,
                     std::span<const double> importance_weights) {
  config.validate();
  const auto start_time = Clock::now();
  const std::size_t n = data.size();
  if (n < config.batch_size)
    throw std::invalid_argument("SR training: dataset of " + std::to_string(n) +
                                " pairs is smaller than the batch size " + std::to_string(config.batch_size));
  if (data.parameter_dim() != g.parameter_dim() || data.data_dim() != g.data_dim())
    throw ShapeError("SR training: dataset dimensions do not match the generator");
  if (!importance_weights.empty() && importance_weights.size() != n)
    throw ShapeError("SR training: one importance weight per pair required");

  const Split split = split_indices(n, config.validation_fraction, config.seed);
  const Tensor train_theta = gather_rows(data.theta, split.train);
  const Tensor train_y = gather_rows(data.y, split.train);
  const std::vector<double> train_w = importance_weights.empty() ? std::vector<double>{}
                                                                 : gather(importance_weights, split.train);
  Tensor val_theta, val_y;
  std::vector<double> val_w;
  if (!split.validation.empty()) {
    val_theta = gather_rows(data.theta, split.validation);
    val_y = gather_rows(data.y, split.validation);
    if (!importance_weights.empty()) val_w = gather(importance_weights, split.validation);
  }

  TrainResult result;
  TrainState state;
  state.adam = make_adam_state(g.weights);
  AdamOptions adam;
  adam.learning_rate = config.learning_rate;
  Rng rng(derive_seed(config.seed, "training"));
  const std::uint64_t val_seed = derive_seed(config.seed, "validation");

  const std::size_t n_train = split.train.size();
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  {
    const std::size_t first = std::min(config.batch_size, n_train);
    result.rule = resolve_bandwidth(
        config.rule, gather_rows(train_theta, std::span<const std::size_t>(order.data(), first)));
  }

  Weights best_weights = g.weights;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    state.epoch = epoch;
    if (epoch > 1) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n_train; start += config.batch_size, ++batch_index) {
      const std::size_t count = std::min(config.batch_size, n_train - start);
      std::span<const std::size_t> idx(order.data() + start, count);
      ad::Tape tape;
      auto w = register_weights(tape, g.weights, true);
      std::vector<double> pw;
      if (!train_w.empty()) pw = gather(train_w, idx);
      ad::Var loss = sr_batch_loss(g, w, gather_rows(train_theta, idx), gather_rows(train_y, idx),
                                   result.rule, config.m, rng, pw);
      const double value = loss.value().item();
      require_finite(value, epoch, batch_index, "scoring-rule loss");
      adam_update(g.weights, collect_grads(tape.backward(loss), w), state.adam, adam);
      epoch_loss += value * static_cast<double>(count);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / static_cast<double>(n_train);
    if (!split.validation.empty()) {
      record.val_loss = evaluate_sr_loss(g, val_theta, val_y, result.rule, config.m, val_seed, val_w);
      require_finite(record.val_loss, epoch, batch_index, "validation loss");
    }
    record.wall_time_sec = seconds_since(start_time);
    result.history.push_back(record);

    if (config.early_stopping.enabled) {
      const bool stop = early_stop_check(state.early_stop, record.val_loss, config.early_stopping.patience);
      if (state.early_stop.best_check == state.early_stop.checks) best_weights = g.weights;
      if (stop) {
        result.stopped_early = true;
        break;
      }
    }
  }

  if (config.early_stopping.enabled && state.early_stop.checks > 0) {
    g.weights = best_weights;
    result.best_epoch = state.early_stop.best_check;
  } else {
    result.best_epoch = result.history.empty() ? 0 : result.history.back().epoch;
  }
  result.generator = std::move(g);
  result.wall_time_sec = seconds_since(start_time);
  return result;
}

// --- adversarial training ---------------------------------------------------

void GANTrainConfig::validate() const {
  if (critic_steps == 0) throw std::invalid_argument("GAN training: critic steps must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("GAN training: batch size must be >= 1");
  if (!(generator_learning_rate >= 0.0) || !(critic_learning_rate >= 0.0))
    throw std::invalid_argument("GAN training: learning rates must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("GAN training: validation fraction must lie in [0, 1)");
  if (early_stopping.enabled && !(validation_fraction > 0.0))
    throw std::invalid_argument("GAN training: early stopping needs a validation fraction in (0, 1)");
  if (probe_m < 2) throw std::invalid_argument("GAN training: probe m must be >= 2");
}

GanBatchLosses gan_batch_losses(const GeneratorNet& g, std::span<const ad::Var> g_weights,
                                const CriticNet& c, std::span<const ad::Var> c_weights,
                                const Tensor& thetas, const Tensor& ys, Rng& rng) {
  if (thetas.rank() != 2 || thetas.rows() == 0 || ys.rows() != thetas.rows())
    throw ShapeError("gan_batch_losses: batch must be non-empty with matching rows");
  ad::Tape& tape = *g_weights[0].tape();
  ad::Var fake = generator_forward(g, g_weights, draw_latents(g.latent, thetas.rows(), rng), ys);
  ad::Var real_score = ad::clamp(critic_forward(c, c_weights, tape.constant(thetas), ys), kCriticClamp,
                                 1.0 - kCriticClamp);
  ad::Var fake_score = ad::clamp(critic_forward(c, c_weights, fake, ys), kCriticClamp, 1.0 - kCriticClamp);
  ad::Var one = tape.constant(Tensor::scalar(1.0));
  ad::Var log_fake = ad::mean(ad::log(one - fake_score));
  ad::Var critic_loss = ad::scale(ad::mean(ad::log(real_score)) + log_fake, -1.0);
  return {critic_loss, log_fake};
}

GanTrainResult train_gan(GeneratorNet g, CriticNet c, const Dataset& data, const GANTrainConfig& config) {
  config.validate();
  const auto start_time = Clock::now();
  const std::size_t n = data.size();
  if (n < config.batch_size)
    throw std::invalid_argument("GAN training: dataset of " + std::to_string(n) +
                                " pairs is smaller than the batch size " + std::to_string(config.batch_size));
  if (data.parameter_dim() != g.parameter_dim() || data.data_dim() != g.data_dim() ||
      c.parameter_dim != g.parameter_dim() || c.data_dim() != g.data_dim())
    throw ShapeError("GAN training: dataset, generator and critic dimensions disagree");

  const Split split = split_indices(n, config.validation_fraction, config.seed);
  const Tensor train_theta = gather_rows(data.theta, split.train);
  const Tensor train_y = gather_rows(data.y, split.train);
  Tensor val_theta, val_y;
  if (!split.validation.empty()) {
    val_theta = gather_rows(data.theta, split.validation);
    val_y = gather_rows(data.y, split.validation);
  }
  const ScoringRule probe = EnergyScoreParams{1.0};

  GanTrainResult result;
  AdamState g_state = make_adam_state(g.weights);
  AdamState c_state = make_adam_state(c.weights);
  AdamOptions g_adam, c_adam;
  g_adam.learning_rate = config.generator_learning_rate;
  c_adam.learning_rate = config.critic_learning_rate;
  EarlyStopState stopper;
  Rng rng(derive_seed(config.seed, "training"));
  const std::uint64_t val_seed = derive_seed(config.seed, "validation");

  const std::size_t n_train = split.train.size();
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Weights best_weights = g.weights;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double gen_total = 0.0, critic_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n_train; start += config.batch_size, ++batch_index) {
      const std::size_t count = std::min(config.batch_size, n_train - start);
      std::span<const std::size_t> idx(order.data() + start, count);
      const Tensor thetas = gather_rows(train_theta, idx);
      const Tensor ys = gather_rows(train_y, idx);

      // Critic ascent with the generator frozen.
      double critic_value = 0.0;
      for (std::size_t step = 0; step < config.critic_steps; ++step) {
        ad::Tape tape;
        auto gw = register_weights(tape, g.weights, false);
        auto cw = register_weights(tape, c.weights, true);
        const auto losses = gan_batch_losses(g, gw, c, cw, thetas, ys, rng);
        critic_value = losses.critic_loss.value().item();
        require_finite(critic_value, epoch, batch_index, "critic loss");
        adam_update(c.weights, collect_grads(tape.backward(losses.critic_loss), cw), c_state, c_adam);
      }

      // Generator descent with the critic frozen.
      ad::Tape tape;
      auto gw = register_weights(tape, g.weights, true);
      auto cw = register_weights(tape, c.weights, false);
      const auto losses = gan_batch_losses(g, gw, c, cw, thetas, ys, rng);
      const double gen_value = losses.generator_loss.value().item();
      require_finite(gen_value, epoch, batch_index, "generator loss");
      adam_update(g.weights, collect_grads(tape.backward(losses.generator_loss), gw), g_state, g_adam);

      gen_total += gen_value * static_cast<double>(count);
      critic_total += critic_value * static_cast<double>(count);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = gen_total / static_cast<double>(n_train);
    if (!split.validation.empty()) {
      record.val_loss = evaluate_sr_loss(g, val_theta, val_y, probe, config.probe_m, val_seed);
      require_finite(record.val_loss, epoch, batch_index, "validation probe");
    }
    record.wall_time_sec = seconds_since(start_time);
    result.history.push_back(record);
    result.critic_history.push_back(critic_total / static_cast<double>(n_train));

    if (config.early_stopping.enabled) {
      const bool stop = early_stop_check(stopper, record.val_loss, config.early_stopping.patience);
      if (stopper.best_check == stopper.checks) best_weights = g.weights;
      if (stop) {
        result.stopped_early = true;
        break;
      }
    }
  }

  if (config.early_stopping.enabled && stopper.checks > 0) {
    g.weights = best_weights;
    result.best_epoch = stopper.best_check;
  } else {
    result.best_epoch = result.history.empty() ? 0 : result.history.back().epoch;
  }
  result.generator = std::move(g);
  result.critic = std::move(c);
  result.wall_time_sec = seconds_since(start_time);
  return result;
}

void write_loss_history(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,train_loss,val_loss,wall_time_sec\n";
  const auto precision = out.precision(17);
  for (const auto& r : history)
    out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.wall_time_sec << '\n';
  out.precision(precision);
}

}  // namespace srlfi
