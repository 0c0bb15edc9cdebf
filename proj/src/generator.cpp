#include "srlfi/generator.hpp"

#include <cmath>
#include <stdexcept>

#include "srlfi/errors.hpp"

namespace srlfi {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
  }
  return "?";
}

std::string to_string(LatentFamily f) {
  return f == LatentFamily::standard_normal ? "standard_normal" : "uniform";
}

Activation parse_activation(const std::string& name) {
  for (auto a : {Activation::identity, Activation::tanh, Activation::sigmoid, Activation::relu,
                 Activation::leaky_relu})
    if (to_string(a) == name) return a;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

LatentFamily parse_latent_family(const std::string& name) {
  if (name == "standard_normal") return LatentFamily::standard_normal;
  if (name == "uniform") return LatentFamily::uniform;
  throw std::invalid_argument("unknown latent family '" + name + "'");
}

OutputTransform OutputTransform::sigmoid_box(std::vector<double> low, std::vector<double> high) {
  OutputTransform t;
  t.kind = Kind::sigmoid_box;
  t.low = std::move(low);
  t.high = std::move(high);
  return t;
}

OutputTransform OutputTransform::affine(std::vector<double> scale, std::vector<double> shift) {
  OutputTransform t;
  t.kind = Kind::affine;
  t.scale = std::move(scale);
  t.shift = std::move(shift);
  return t;
}

void MlpArchitecture::validate() const {
  if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("MLP sizes must be >= 1");
  for (auto h : hidden)
    if (h == 0) throw std::invalid_argument("MLP hidden sizes must be >= 1");
  if (activations.size() != hidden.size())
    throw std::invalid_argument("MLP needs one activation per hidden layer");
  switch (output.kind) {
    case OutputTransform::Kind::identity: break;
    case OutputTransform::Kind::sigmoid_box:
      if (output.low.size() != output_dim || output.high.size() != output_dim)
        throw std::invalid_argument("sigmoid box bounds must match output dimension");
      for (std::size_t i = 0; i < output_dim; ++i)
        if (!std::isfinite(output.low[i]) || !std::isfinite(output.high[i]) ||
            !(output.low[i] < output.high[i]))
          throw std::invalid_argument("sigmoid box bounds must be finite with low < high");
      break;
    case OutputTransform::Kind::affine:
      if (output.scale.size() != output_dim || output.shift.size() != output_dim)
        throw std::invalid_argument("affine output transform must match output dimension");
      break;
  }
}

Weights init_network(const MlpArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  Weights weights;
  std::size_t fan_in = arch.input_dim;
  for (std::size_t layer = 0; layer < arch.layer_count(); ++layer) {
    const std::size_t fan_out = layer < arch.hidden.size() ? arch.hidden[layer] : arch.output_dim;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> unif(-bound, bound);
    Tensor w({fan_in, fan_out});
    for (double& v : w.values()) v = unif(rng);
    weights.push_back(std::move(w));
    weights.emplace_back(Shape{fan_out}, 0.0);
    fan_in = fan_out;
  }
  return weights;
}

std::vector<ad::Var> register_weights(ad::Tape& tape, const Weights& weights, bool requires_grad) {
  std::vector<ad::Var> vars;
  vars.reserve(weights.size());
  for (const auto& w : weights) vars.push_back(tape.leaf(w, requires_grad));
  return vars;
}

namespace {

ad::Var activate(Activation a, ad::Var x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::tanh: return ad::tanh(x);
    case Activation::sigmoid: return ad::sigmoid(x);
    case Activation::relu: return ad::relu(x);
    case Activation::leaky_relu: return ad::leaky_relu(x);
  }
  return x;
}

}  // namespace

ad::Var mlp_forward(const MlpArchitecture& arch, std::span<const ad::Var> weights, ad::Var input) {
  if (weights.size() != 2 * arch.layer_count())
    throw ShapeError("mlp_forward: expected " + std::to_string(2 * arch.layer_count()) +
                     " weight tensors, got " + std::to_string(weights.size()));
  if (input.value().rank() != 2 || input.value().shape()[1] != arch.input_dim)
    throw ShapeError("mlp_forward: input " + shape_string(input.shape()) + " does not match input dim " +
                     std::to_string(arch.input_dim));
  ad::Var h = input;
  for (std::size_t layer = 0; layer < arch.layer_count(); ++layer) {
    h = ad::matmul(h, weights[2 * layer]) + weights[2 * layer + 1];
    if (layer < arch.hidden.size()) h = activate(arch.activations[layer], h);
  }
  ad::Tape& tape = *input.tape();
  const auto& out = arch.output;
  switch (out.kind) {
    case OutputTransform::Kind::identity: break;
    case OutputTransform::Kind::sigmoid_box: {
      std::vector<double> width(arch.output_dim);
      for (std::size_t i = 0; i < width.size(); ++i) width[i] = out.high[i] - out.low[i];
      h = ad::sigmoid(h) * tape.constant(Tensor::vector(width)) +
          tape.constant(Tensor::vector(out.low));
      break;
    }
    case OutputTransform::Kind::affine:
      h = h * tape.constant(Tensor::vector(out.scale)) + tape.constant(Tensor::vector(out.shift));
      break;
  }
  return h;
}

GeneratorNet make_generator(std::size_t parameter_dim, std::size_t data_dim,
                            const GeneratorOptions& options, std::uint64_t seed) {
  GeneratorNet g;
  g.latent.dim = options.latent_dim ? options.latent_dim : parameter_dim;
  g.latent.family = options.latent_family;
  g.arch.input_dim = g.latent.dim + data_dim;
  g.arch.hidden = options.network.hidden;
  g.arch.activations.assign(g.arch.hidden.size(), options.network.activation);
  g.arch.output_dim = parameter_dim;
  g.arch.output = options.output;
  g.weights = init_network(g.arch, seed);
  return g;
}

Tensor draw_latents(const LatentSpec& latent, std::size_t count, Rng& rng) {
  if (latent.dim == 0) throw std::invalid_argument("latent dimension must be >= 1");
  Tensor z({count, latent.dim});
  if (latent.family == LatentFamily::standard_normal) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : z.values()) v = normal(rng);
  } else {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (double& v : z.values()) v = unif(rng);
  }
  return z;
}

Tensor repeat_rows(std::span<const double> row, std::size_t rows) {
  Tensor out({rows, row.size()});
  for (std::size_t r = 0; r < rows; ++r) std::copy(row.begin(), row.end(), out.row(r).begin());
  return out;
}

ad::Var generator_forward(const GeneratorNet& g, std::span<const ad::Var> weights,
                          const Tensor& latents, const Tensor& conditions) {
  if (weights.empty()) throw std::invalid_argument("generator_forward: no weights");
  if (latents.rank() != 2 || latents.shape()[1] != g.latent.dim)
    throw ShapeError("generator: latents " + shape_string(latents.shape()) + " do not match latent dim " +
                     std::to_string(g.latent.dim));
  if (conditions.rank() != 2 || conditions.shape()[1] != g.data_dim() ||
      conditions.shape()[0] != latents.shape()[0])
    throw ShapeError("generator: conditions " + shape_string(conditions.shape()) +
                     " do not match data dim " + std::to_string(g.data_dim()) + " and " +
                     std::to_string(latents.shape()[0]) + " latent rows");
  ad::Tape& tape = *weights[0].tape();
  ad::Var input = ad::concat(tape.constant(latents), tape.constant(conditions));
  return mlp_forward(g.arch, weights, input);
}

ad::Var sample_posterior(const GeneratorNet& g, std::span<const ad::Var> weights,
                         std::span<const double> y, std::size_t m, Rng& rng) {
  if (m == 0) throw std::invalid_argument("sample_posterior: m must be >= 1");
  if (y.size() != g.data_dim())
    throw ShapeError("sample_posterior: observation has " + std::to_string(y.size()) +
                     " entries, generator expects " + std::to_string(g.data_dim()));
  return generator_forward(g, weights, draw_latents(g.latent, m, rng), repeat_rows(y, m));
}

Tensor sample_posterior(const GeneratorNet& g, std::span<const double> y, std::size_t m,
                        std::uint64_t seed) {
  Rng rng(seed);
  ad::Tape tape;
  auto w = register_weights(tape, g.weights, false);
  return sample_posterior(g, w, y, m, rng).value();
}

CriticNet make_critic(std::size_t parameter_dim, std::size_t data_dim,
                      const NetworkOptions& options, std::uint64_t seed) {
  CriticNet c;
  c.parameter_dim = parameter_dim;
  c.arch.input_dim = parameter_dim + data_dim;
  c.arch.hidden = options.hidden;
  c.arch.activations.assign(c.arch.hidden.size(), options.activation);
  c.arch.output_dim = 1;
  c.weights = init_network(c.arch, seed);
  return c;
}

ad::Var critic_forward(const CriticNet& c, std::span<const ad::Var> weights, ad::Var thetas,
                       const Tensor& ys) {
  const Tensor& t = thetas.value();
  if (t.rank() != 2 || t.shape()[1] != c.parameter_dim || ys.rank() != 2 ||
      ys.shape()[1] != c.data_dim() || ys.shape()[0] != t.shape()[0])
    throw ShapeError("critic: inputs " + shape_string(t.shape()) + " and " +
                     shape_string(ys.shape()) + " do not match parameter dim " +
                     std::to_string(c.parameter_dim) + " / data dim " + std::to_string(c.data_dim()));
  ad::Var input = ad::concat(thetas, thetas.tape()->constant(ys));
  return ad::sigmoid(mlp_forward(c.arch, weights, input));
}

double critic_score(const CriticNet& c, std::span<const double> theta, std::span<const double> y) {
  ad::Tape tape;
  auto w = register_weights(tape, c.weights, false);
  ad::Var t = tape.constant(Tensor::matrix(1, theta.size(), {theta.begin(), theta.end()}));
  return critic_forward(c, w, t, Tensor::matrix(1, y.size(), {y.begin(), y.end()})).value().item();
}

}  // namespace srlfi
