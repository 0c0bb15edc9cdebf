#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "srlfi/autodiff.hpp"
#include "srlfi/random.hpp"
#include "srlfi/tensor.hpp"

namespace srlfi {

enum class Activation { identity, tanh, sigmoid, relu, leaky_relu };
enum class LatentFamily { standard_normal, uniform };

std::string to_string(Activation a);
std::string to_string(LatentFamily f);
Activation parse_activation(const std::string& name);
LatentFamily parse_latent_family(const std::string& name);

struct LatentSpec {
  std::size_t dim = 1;
  LatentFamily family = LatentFamily::standard_normal;
};

/// Final map applied to the last linear layer.
struct OutputTransform {
  enum class Kind { identity, sigmoid_box, affine };

  Kind kind = Kind::identity;
  std::vector<double> low;    // sigmoid_box: low + (high - low) * sigmoid(x)
  std::vector<double> high;
  std::vector<double> scale;  // affine: scale * x + shift
  std::vector<double> shift;

  static OutputTransform identity() { return {}; }
  static OutputTransform sigmoid_box(std::vector<double> low, std::vector<double> high);
  static OutputTransform affine(std::vector<double> scale, std::vector<double> shift);
};

struct MlpArchitecture {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden;
  std::vector<Activation> activations;  // one per hidden layer
  std::size_t output_dim = 1;
  OutputTransform output;

  void validate() const;
  std::size_t layer_count() const noexcept { return hidden.size() + 1; }
};

/// Layer parameters in order W0 (in x h0), b0 (h0), W1, b1, ...
using Weights = std::vector<Tensor>;

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
Weights init_network(const MlpArchitecture& arch, std::uint64_t seed);

std::vector<ad::Var> register_weights(ad::Tape& tape, const Weights& weights, bool requires_grad);

/// Forward pass over a batch of rows.
ad::Var mlp_forward(const MlpArchitecture& arch, std::span<const ad::Var> weights, ad::Var input);

/// Conditional generator g(z, y) -> theta over the concatenation [z, y].
struct GeneratorNet {
  MlpArchitecture arch;
  Weights weights;
  LatentSpec latent;

  std::size_t data_dim() const noexcept { return arch.input_dim - latent.dim; }
  std::size_t parameter_dim() const noexcept { return arch.output_dim; }
};

struct NetworkOptions {
  std::vector<std::size_t> hidden{128, 128, 128};
  Activation activation = Activation::leaky_relu;
};

struct GeneratorOptions {
  NetworkOptions network;
  std::size_t latent_dim = 0;  // 0 selects parameter_dim
  LatentFamily latent_family = LatentFamily::standard_normal;
  OutputTransform output;
};

GeneratorNet make_generator(std::size_t parameter_dim, std::size_t data_dim,
                            const GeneratorOptions& options, std::uint64_t seed);

Tensor draw_latents(const LatentSpec& latent, std::size_t count, Rng& rng);

/// g(latents[r], conditions[r]) for every row r, recorded on the tape.
ad::Var generator_forward(const GeneratorNet& g, std::span<const ad::Var> weights,
                          const Tensor& latents, const Tensor& conditions);

/// m draws from the pushforward at a single observation. The tape variant
/// keeps the draws differentiable w.r.t. `weights`.
ad::Var sample_posterior(const GeneratorNet& g, std::span<const ad::Var> weights,
                         std::span<const double> y, std::size_t m, Rng& rng);
Tensor sample_posterior(const GeneratorNet& g, std::span<const double> y, std::size_t m,
                        std::uint64_t seed);

/// Scalar critic c(theta, y) in (0, 1) for adversarial training.
struct CriticNet {
  MlpArchitecture arch;
  Weights weights;
  std::size_t parameter_dim = 1;

  std::size_t data_dim() const noexcept { return arch.input_dim - parameter_dim; }
};

CriticNet make_critic(std::size_t parameter_dim, std::size_t data_dim,
                      const NetworkOptions& options, std::uint64_t seed);

/// Sigmoid critic outputs (n x 1) for rows of thetas and matching rows of ys.
ad::Var critic_forward(const CriticNet& c, std::span<const ad::Var> weights, ad::Var thetas,
                       const Tensor& ys);
double critic_score(const CriticNet& c, std::span<const double> theta, std::span<const double> y);

/// Stacks one condition vector into `rows` rows.
Tensor repeat_rows(std::span<const double> row, std::size_t rows);

}  // namespace srlfi
