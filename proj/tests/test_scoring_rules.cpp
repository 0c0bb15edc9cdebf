#include <cmath>
#include <random>
#include <set>

#include <doctest.h>

#include "srlfi/errors.hpp"
#include "srlfi/scoring_rules.hpp"
#include "test_support.hpp"

using namespace srlfi;
using srlfi::test::mean_se;

namespace {

Tensor col(std::initializer_list<double> v) {
  Tensor t({v.size(), 1});
  std::size_t i = 0;
  for (double x : v) t.values()[i++] = x;
  return t;
}

// Windows enumerated by start position, independent of the library's counting.
std::size_t brute_force_patch_count(const std::vector<std::size_t>& grid, std::size_t size, std::size_t step) {
  std::set<std::vector<std::size_t>> starts;
  if (grid.size() == 1) {
    for (std::size_t s = 0; s + size <= grid[0]; s += step) starts.insert({s});
  } else {
    for (std::size_t r = 0; r + size <= grid[0]; r += step)
      for (std::size_t c = 0; c + size <= grid[1]; c += step) starts.insert({r, c});
  }
  return starts.size();
}

}  // namespace

TEST_SUITE("scoring_rules") {

TEST_CASE("energy score examples") {
  CHECK(energy_score_estimate(col({3, 3}), Tensor::vector({3}), 1.0) == 0.0);
  CHECK(energy_score_estimate(col({0, 2}), Tensor::vector({1}), 1.0) == doctest::Approx(0.0));
  CHECK(energy_score_estimate(col({1, 3, 5}), Tensor::vector({0}), 1.0) == doctest::Approx(10.0 / 3.0));
  CHECK_THROWS(energy_score_estimate(col({1}), Tensor::vector({0}), 1.0));
  CHECK_THROWS(energy_score_estimate(col({1, 2}), Tensor::vector({0}), 2.0));
  CHECK_THROWS(energy_score_estimate(col({1, 2}), Tensor::vector({0}), 0.0));
}

TEST_CASE("kernel score examples") {
  CHECK(kernel_score_estimate(col({0, 0}), Tensor::vector({0}), {0.7}) == doctest::Approx(-1.0));
  CHECK(kernel_score_estimate(col({0, 0}), Tensor::vector({0}), {3.0}) == doctest::Approx(-1.0));
  CHECK(kernel_score_estimate(col({0, 2}), Tensor::vector({1}), {1.0}) ==
        doctest::Approx(std::exp(-2.0) - 2.0 * std::exp(-0.5)));
  CHECK(std::exp(-2.0) - 2.0 * std::exp(-0.5) == doctest::Approx(-1.0777).epsilon(1e-4));
  CHECK_THROWS(kernel_score_estimate(col({0}), Tensor::vector({0}), {1.0}));
  CHECK_THROWS(kernel_score_estimate(col({0, 1}), Tensor::vector({0}), {0.0}));

  const Tensor s = Tensor::matrix({{0.1, 0.4}, {1.2, -0.3}, {0.5, 0.5}});
  const Tensor shifted = Tensor::matrix({{5.1, -1.6}, {6.2, -2.3}, {5.5, -1.5}});
  CHECK(kernel_score_estimate(s, Tensor::vector({0.2, 0.1}), {0.8}) ==
        doctest::Approx(kernel_score_estimate(shifted, Tensor::vector({5.2, -1.9}), {0.8})));
}

TEST_CASE("gaussian kernel") {
  const std::vector<double> a{1.0, 2.0}, b{2.0, 3.0};
  CHECK(gaussian_kernel_eval(a, a, 0.3) == 1.0);
  CHECK(gaussian_kernel_eval(a, b, 1.0) == doctest::Approx(std::exp(-1.0)));  // |a-b|^2 = 2 = 2 gamma^2
  CHECK(gaussian_kernel_eval(a, b, 1e6) == doctest::Approx(1.0));
  const double k = gaussian_kernel_eval(a, b, 0.5);
  CHECK(k > 0.0);
  CHECK(k <= 1.0);
}

TEST_CASE("patch counts") {
  CHECK(patch_layout_indices({{100}, 10, 5}).size() == 19);
  CHECK(patch_layout_indices({{100}, 20, 10}).size() == 9);
  CHECK(patch_layout_indices({{28, 28}, 8, 5}).size() == 25);
  CHECK_THROWS(patch_layout_indices({{100}, 10, 7}));
  CHECK_THROWS(patch_layout_indices({{10}, 11, 1}));
  PatchLayout zero_weight{{100}, 10, 5, 1.0, 0.0};
  CHECK_THROWS(zero_weight.validate());
}

TEST_CASE("patch count formula matches enumeration on every valid layout") {
  for (std::size_t extent = 1; extent <= 30; ++extent)
    for (std::size_t size = 1; size <= extent; ++size)
      for (std::size_t step = 1; step <= extent; ++step) {
        if ((extent - size) % step != 0) continue;
        CHECK(patch_layout_indices({{extent}, size, step}).size() == brute_force_patch_count({extent}, size, step));
        if (extent <= 12)
          CHECK(patch_layout_indices({{extent, extent}, size, step}).size() ==
                brute_force_patch_count({extent, extent}, size, step));
      }
}

TEST_CASE("patch indices are row-major windows") {
  const auto p = patch_layout_indices({{4, 4}, 2, 2});
  REQUIRE(p.size() == 4);
  CHECK(p[0] == std::vector<std::size_t>{0, 1, 4, 5});
  CHECK(p[3] == std::vector<std::size_t>{10, 11, 14, 15});
}

TEST_CASE("patched score examples") {
  const Tensor samples = Tensor::matrix({{0.3, -1.0, 0.8, 2.0}, {1.0, 0.5, -0.2, 0.1}, {0.0, 0.7, 1.1, -0.4}});
  const Tensor obs = Tensor::vector({0.1, 0.2, 0.3, 0.4});
  const double full = energy_score_estimate(samples, obs, 1.0);

  const ScoringRule degenerate = PatchedScoreParams{EnergyScoreParams{1.0}, {{4}, 2, 2, 1.0, 0.0}};
  CHECK(score_estimate(degenerate, samples, obs) == doctest::Approx(full));

  const ScoringRule whole = PatchedScoreParams{EnergyScoreParams{1.0}, {{4}, 4, 1, 1.0, 1.0}};
  CHECK(score_estimate(whole, samples, obs) == doctest::Approx(2.0 * full));

  const ScoringRule halves = PatchedScoreParams{EnergyScoreParams{1.0}, {{4}, 2, 2, 1.0, 1.0}};
  CHECK(score_estimate(halves, Tensor::matrix({{0, 0, 0, 0}, {2, 2, 2, 2}}), Tensor::vector({1, 1, 1, 1})) ==
        doctest::Approx(0.0));

  const ScoringRule kernel_whole = PatchedScoreParams{KernelScoreParams{0.9}, {{4}, 4, 1, 1.0, 1.0}};
  CHECK(score_estimate(kernel_whole, samples, obs) ==
        doctest::Approx(2.0 * kernel_score_estimate(samples, obs, {0.9})));

  CHECK_THROWS(score_estimate(halves, Tensor::matrix({{0, 0, 0}, {1, 1, 1}}), Tensor::vector({0, 0, 0})));
}

TEST_CASE("median bandwidth") {
  CHECK(median_bandwidth(col({0, 1, 2})) == doctest::Approx(1.0));
  const Tensor data = Tensor::matrix({{0.1, 0.3}, {1.7, -0.2}, {0.9, 0.9}, {-1.0, 2.0}});
  Tensor scaled = data;
  for (double& v : scaled.values()) v *= 3.5;
  CHECK(median_bandwidth(scaled) == doctest::Approx(3.5 * median_bandwidth(data)));
  CHECK_THROWS(median_bandwidth(col({4, 4})));
  CHECK_THROWS(median_bandwidth(col({4})));
}

TEST_CASE("exact discrete energy score") {
  CHECK(exact_energy_score_discrete(col({5}), std::vector<double>{1.0}, std::vector<double>{5}, 1.0) == 0.0);
  CHECK(exact_energy_score_discrete(col({0, 2}), std::vector<double>{0.5, 0.5}, std::vector<double>{1}, 1.0) ==
        doctest::Approx(1.0));
  CHECK(exact_energy_score_discrete(col({0, 2}), std::vector<double>{0.5, 0.5}, std::vector<double>{0}, 1.0) ==
        doctest::Approx(1.0));
  CHECK_THROWS(exact_energy_score_discrete(col({0, 2}), std::vector<double>{0.5, 0.6}, std::vector<double>{0}, 1.0));
  CHECK_THROWS(exact_energy_score_discrete(col({0, 2}), std::vector<double>{1.5, -0.5}, std::vector<double>{0}, 1.0));
}

TEST_CASE("estimators are unbiased on a discrete distribution") {
  const Tensor support = Tensor::matrix({{0, 0}, {1, 0}, {0, 2}, {-1, -1}});
  const std::vector<double> probs{0.1, 0.2, 0.3, 0.4};
  const std::vector<double> obs{0.3, 0.2};
  const double gamma = 0.8;

  // Kernel oracle: E k(X, X') - 2 E k(X, x) by a double sum over the support.
  double kernel_exact = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    kernel_exact -= 2.0 * probs[i] * gaussian_kernel_eval(support.row(i), obs, gamma);
    for (std::size_t j = 0; j < 4; ++j)
      kernel_exact += probs[i] * probs[j] * gaussian_kernel_eval(support.row(i), support.row(j), gamma);
  }

  Rng rng(17);
  std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
  const std::size_t m = 5, reps = 20000;
  std::vector<double> es, ks;
  Tensor draw({m, 2});
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t k = pick(rng);
      draw.values()[2 * j] = support.at(k, 0);
      draw.values()[2 * j + 1] = support.at(k, 1);
    }
    es.push_back(energy_score_estimate(draw, Tensor::vector(obs), 1.0));
    ks.push_back(kernel_score_estimate(draw, Tensor::vector(obs), {gamma}));
  }
  const auto e = mean_se(es), k = mean_se(ks);
  CHECK(std::abs(e.mean - exact_energy_score_discrete(support, probs, obs, 1.0)) < 4.0 * e.se);
  CHECK(std::abs(k.mean - kernel_exact) < 4.0 * k.se);
}

TEST_CASE("energy score is minimized at the data distribution") {
  // Common random numbers across mu: P_mu draws are shifted copies.
  Rng rng(5);
  std::normal_distribution<double> n01(0.0, 1.0);
  const std::size_t reps = 20000, m = 4;
  const std::vector<double> mus{-2, -1, 0, 1, 2};
  std::vector<std::vector<double>> scores(mus.size());
  Tensor draw({m, 1});
  std::vector<double> base(m);
  for (std::size_t r = 0; r < reps; ++r) {
    const double x = n01(rng);
    for (auto& b : base) b = n01(rng);
    for (std::size_t k = 0; k < mus.size(); ++k) {
      for (std::size_t j = 0; j < m; ++j) draw.values()[j] = base[j] + mus[k];
      scores[k].push_back(energy_score_estimate(draw, Tensor::vector({x}), 1.0));
    }
  }
  for (std::size_t k = 0; k < mus.size(); ++k) {
    if (mus[k] == 0.0) continue;
    std::vector<double> diff(reps);
    for (std::size_t r = 0; r < reps; ++r) diff[r] = scores[k][r] - scores[2][r];
    const auto d = mean_se(diff);
    CAPTURE(mus[k]);
    CHECK(d.mean > 2.0 * d.se);
  }
}

TEST_CASE("estimator gradients match finite differences") {
  Rng rng(8);
  const Tensor obs = Tensor::vector({0.2, -0.1, 0.4, 0.0});
  const std::vector<ScoringRule> rules{
      EnergyScoreParams{1.0}, EnergyScoreParams{1.5}, EnergyScoreParams{0.5}, KernelScoreParams{0.7},
      PatchedScoreParams{EnergyScoreParams{1.0}, {{4}, 2, 1, 1.0, 0.5}},
      PatchedScoreParams{KernelScoreParams{1.2}, {{2, 2}, 1, 1, 0.5, 1.0}}};
  for (const auto& rule : rules) {
    CAPTURE(describe(rule));
    auto f = [&](ad::Tape&, ad::Var x) { return score_estimate(rule, x, obs); };
    for (int trial = 0; trial < 20; ++trial) {
      const auto r = ad::gradient_check(f, srlfi::test::random_matrix(5, 4, rng), 1e-6, 1e-4);
      CHECK(r.passed);
    }
  }
}

TEST_CASE("coincident samples keep gradients finite") {
  ad::Tape tape;
  ad::Var x = tape.variable(Tensor::matrix({{1, 1}, {1, 1}, {0, 2}}));
  const auto g = tape.backward(energy_score_estimate(x, Tensor::vector({1, 1}), 1.0));
  for (double v : g.at(x).values()) CHECK(std::isfinite(v));
  CHECK(energy_score_estimate(Tensor::matrix({{1, 1}, {1, 1}}), Tensor::vector({1, 1}), 1.0) == 0.0);
}

}  // TEST_SUITE
