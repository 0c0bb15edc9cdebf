#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "srlfi/generator.hpp"
#include "srlfi/tensor.hpp"

namespace srlfi {

struct ClassifierOptions {
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::relu;
  std::size_t max_epochs = 200;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  // Stop once the epoch training loss has not improved by `tolerance`
  // for `patience` consecutive epochs.
  double tolerance = 1e-4;
  std::size_t patience = 10;
};

/// MLP logistic classifier on standardized features.
struct BinaryClassifier {
  MlpArchitecture arch;
  Weights weights;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;

  /// log p(label 1 | x) - log p(label 0 | x) for each row.
  std::vector<double> logits(const Tensor& features) const;
  double logit(std::span<const double> x) const;
};

BinaryClassifier train_binary_classifier(const Tensor& features, std::span<const int> labels,
                                         const ClassifierOptions& options, std::uint64_t seed);

}  // namespace srlfi
