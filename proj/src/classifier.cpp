#include "srlfi/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "srlfi/errors.hpp"
#include "srlfi/training.hpp"

namespace srlfi {

namespace {

constexpr double kProbClamp = 1e-7;

Tensor standardize(const Tensor& x, std::span<const double> mean, std::span<const double> scale) {
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean[c]) / scale[c];
  }
  return out;
}

}  // namespace

std::vector<double> BinaryClassifier::logits(const Tensor& features) const {
  if (features.rank() != 2 || features.cols() != arch.input_dim)
    throw ShapeError("classifier: features " + shape_string(features.shape()) + " do not match input dim " +
                     std::to_string(arch.input_dim));
  ad::Tape tape;
  auto w = register_weights(tape, weights, false);
  const Tensor out =
      mlp_forward(arch, w, tape.constant(standardize(features, feature_mean, feature_scale))).value();
  return {out.values().begin(), out.values().end()};
}

double BinaryClassifier::logit(std::span<const double> x) const {
  return logits(Tensor::matrix(1, x.size(), {x.begin(), x.end()}))[0];
}

BinaryClassifier train_binary_classifier(const Tensor& features, std::span<const int> labels,
                                         const ClassifierOptions& options, std::uint64_t seed) {
  if (features.rank() != 2 || features.rows() != labels.size() || labels.empty())
    throw ShapeError("classifier: features and labels disagree in length");
  const std::size_t n = features.rows(), d = features.cols();
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(n))
    throw std::invalid_argument("classifier: both classes must be present");

  BinaryClassifier clf;
  clf.feature_mean.assign(d, 0.0);
  clf.feature_scale.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) clf.feature_mean[c] += features.at(r, c) / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = features.at(r, c) - clf.feature_mean[c];
      clf.feature_scale[c] += diff * diff / static_cast<double>(n);
    }
  for (double& s : clf.feature_scale) s = s > 0.0 ? std::sqrt(s) : 1.0;

  clf.arch.input_dim = d;
  clf.arch.hidden = options.hidden;
  clf.arch.activations.assign(options.hidden.size(), options.activation);
  clf.arch.output_dim = 1;
  clf.weights = init_network(clf.arch, derive_seed(seed, "init"));

  const Tensor x = standardize(features, clf.feature_mean, clf.feature_scale);
  AdamOptions adam;
  adam.learning_rate = options.learning_rate;
  AdamState state = make_adam_state(clf.weights);
  Rng rng(derive_seed(seed, "shuffle"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t count = std::min(options.batch_size, n - start);
      std::span<const std::size_t> idx(order.data() + start, count);
      Tensor target({count, 1});
      for (std::size_t i = 0; i < count; ++i) target[i] = labels[idx[i]] == 1 ? 1.0 : 0.0;
      Tensor complement = target;
      for (double& v : complement.values()) v = 1.0 - v;

      ad::Tape tape;
      auto w = register_weights(tape, clf.weights, true);
      ad::Var p = ad::clamp(ad::sigmoid(mlp_forward(clf.arch, w, tape.constant(gather_rows(x, idx)))),
                            kProbClamp, 1.0 - kProbClamp);
      ad::Var one = tape.constant(Tensor::scalar(1.0));
      ad::Var ll = tape.constant(target) * ad::log(p) + tape.constant(complement) * ad::log(one - p);
      ad::Var loss = ad::scale(ad::mean(ll), -1.0);
      const auto grads = tape.backward(loss);
      std::vector<Tensor> g;
      g.reserve(w.size());
      for (auto& v : w) g.push_back(grads.at(v));
      adam_update(clf.weights, g, state, adam);
      total += loss.value().item() * static_cast<double>(count);
    }
    total /= static_cast<double>(n);
    if (total < best - options.tolerance) {
      best = total;
      stale = 0;
    } else if (++stale >= options.patience) {
      break;
    }
  }
  return clf;
}

}  // namespace srlfi
