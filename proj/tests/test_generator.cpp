#include <cmath>

#include <doctest.h>

#include "srlfi/errors.hpp"
#include "srlfi/generator.hpp"
#include "test_support.hpp"

using namespace srlfi;

namespace {

GeneratorNet small_generator(std::size_t p, std::size_t d, std::uint64_t seed,
                             OutputTransform out = OutputTransform::identity()) {
  GeneratorOptions opts;
  opts.network.hidden = {16, 16};
  opts.output = std::move(out);
  return make_generator(p, d, opts, seed);
}

}  // namespace

TEST_SUITE("generator") {

TEST_CASE("initialization is deterministic in the seed") {
  const auto g1 = small_generator(2, 3, 7), g2 = small_generator(2, 3, 7), g3 = small_generator(2, 3, 8);
  CHECK(g1.weights == g2.weights);
  CHECK_FALSE(g1.weights == g3.weights);
}

TEST_CASE("glorot bound and zero biases") {
  MlpArchitecture arch;
  arch.input_dim = 100;
  arch.hidden = {100};
  arch.activations = {Activation::tanh};
  arch.output_dim = 100;
  const auto w = init_network(arch, 5);
  REQUIRE(w.size() == 4);
  const double bound = std::sqrt(6.0 / 200.0);
  double largest = 0.0;
  for (double v : w[0].values()) largest = std::max(largest, std::abs(v));
  CHECK(largest <= bound);
  CHECK(largest > 0.9 * bound);
  for (double v : w[1].values()) CHECK(v == 0.0);
  for (double v : w[3].values()) CHECK(v == 0.0);
}

TEST_CASE("architecture invariants") {
  const auto g = small_generator(2, 3, 1);
  CHECK(g.arch.input_dim == g.latent.dim + 3);
  CHECK(g.parameter_dim() == 2);
  CHECK(g.data_dim() == 3);
  MlpArchitecture bad;
  bad.input_dim = 2;
  bad.hidden = {0};
  bad.activations = {Activation::relu};
  CHECK_THROWS(bad.validate());
  MlpArchitecture box;
  box.input_dim = 1;
  box.output_dim = 1;
  box.output = OutputTransform::sigmoid_box({0.0}, {INFINITY});
  CHECK_THROWS(box.validate());
}

TEST_CASE("zero network returns the final bias") {
  auto g = small_generator(2, 1, 3);
  for (auto& w : g.weights) w.fill(0.0);
  g.weights.back() = Tensor::vector({0.25, -1.5});
  const Tensor draws = sample_posterior(g, std::vector<double>{0.7}, 5, 11);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(draws.at(i, 0) == 0.25);
    CHECK(draws.at(i, 1) == -1.5);
  }
}

TEST_CASE("sigmoid box keeps draws strictly inside") {
  auto g = small_generator(3, 2, 4, OutputTransform::sigmoid_box({0, 0, 0}, {1, 1, 1}));
  for (auto& w : g.weights) for (double& v : w.values()) v *= 2.0;
  const Tensor draws = sample_posterior(g, std::vector<double>{3.0, -3.0}, 500, 2);
  for (double v : draws.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("sampling is deterministic and checks dimensions") {
  const auto g = small_generator(2, 2, 9);
  const std::vector<double> y{0.1, 0.2};
  CHECK(sample_posterior(g, y, 20, 5) == sample_posterior(g, y, 20, 5));
  CHECK_FALSE(sample_posterior(g, y, 20, 5) == sample_posterior(g, y, 20, 6));
  CHECK_THROWS_AS(sample_posterior(g, std::vector<double>{0.1}, 4, 1), ShapeError);
}

TEST_CASE("uniform latent family") {
  LatentSpec spec{3, LatentFamily::uniform};
  Rng rng(1);
  const Tensor z = draw_latents(spec, 1000, rng);
  for (double v : z.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("critic score range and zero critic") {
  NetworkOptions opts;
  opts.hidden = {8, 8};
  auto c = make_critic(2, 1, opts, 3);
  const std::vector<double> theta{0.3, -0.2}, y{1.0};
  const double s = critic_score(c, theta, y);
  CHECK(s > 0.0);
  CHECK(s < 1.0);
  for (auto& w : c.weights) w.fill(0.0);
  CHECK(critic_score(c, theta, y) == 0.5);
  CHECK(critic_score(c, std::vector<double>{100, 100}, std::vector<double>{-5}) == 0.5);
  const double c_half = critic_score(c, theta, y);
  CHECK(std::log(c_half) + std::log(1 - c_half) == doctest::Approx(2 * std::log(0.5)));
  CHECK(2 * std::log(0.5) == doctest::Approx(-1.3863).epsilon(1e-4));
  CHECK_THROWS_AS(critic_score(c, std::vector<double>{1.0}, y), ShapeError);
}

// Affine generator (identity activation): output mean is W2^T (W1^T [0, y] + b1) + b2.
TEST_CASE("pushforward mean matches the affine map") {
  GeneratorNet g;
  g.latent = {2, LatentFamily::standard_normal};
  g.arch.input_dim = 3;
  g.arch.hidden = {3};
  g.arch.activations = {Activation::identity};
  g.arch.output_dim = 2;
  g.weights = init_network(g.arch, 21);
  g.weights[1] = Tensor::vector({0.1, -0.2, 0.3});
  g.weights[3] = Tensor::vector({0.5, -0.5});
  const double yv = 1.3;

  // Analytic mean and per-coordinate variance.
  const Tensor& w1 = g.weights[0];
  const Tensor& w2 = g.weights[2];
  std::vector<double> mean(2, 0.0), var(2, 0.0);
  for (std::size_t o = 0; o < 2; ++o) {
    mean[o] = g.weights[3][o];
    for (std::size_t h = 0; h < 3; ++h) mean[o] += w2.at(h, o) * (w1.at(2, h) * yv + g.weights[1][h]);
    for (std::size_t l = 0; l < 2; ++l) {
      double a = 0.0;
      for (std::size_t h = 0; h < 3; ++h) a += w1.at(l, h) * w2.at(h, o);
      var[o] += a * a;
    }
  }
  const std::size_t m = 100000;
  const Tensor draws = sample_posterior(g, std::vector<double>{yv}, m, 77);
  for (std::size_t o = 0; o < 2; ++o) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += draws.at(i, o);
    CHECK(std::abs(s / m - mean[o]) < 4.0 * std::sqrt(var[o] / m));
  }
}

TEST_CASE("gradients flow from draws to weights") {
  const auto g = small_generator(2, 1, 13);
  auto f = [&](ad::Tape& tape, ad::Var w0) {
    std::vector<ad::Var> w = register_weights(tape, g.weights, false);
    w[0] = w0;
    Rng rng(4);
    ad::Var draws = sample_posterior(g, w, std::vector<double>{0.4}, 6, rng);
    return ad::mean(ad::tanh(draws) * draws);
  };
  const auto r = ad::gradient_check(f, g.weights[0], 1e-5, 1e-4);
  CHECK(r.passed);
  double norm = 0.0;
  for (double v : r.analytic.values()) norm += v * v;
  CHECK(norm > 0.0);
}

}  // TEST_SUITE
