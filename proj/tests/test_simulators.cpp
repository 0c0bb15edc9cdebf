#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>
#include <sstream>

#include <doctest.h>

#include "srlfi/errors.hpp"
#include "srlfi/io.hpp"
#include "srlfi/simulators.hpp"
#include "test_support.hpp"

using namespace srlfi;
using srlfi::test::mean_se;

namespace {

std::vector<double> column(const Tensor& t, std::size_t c) {
  std::vector<double> out(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) out[i] = t.at(i, c);
  return out;
}

double correlation(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_SUITE("simulators") {

TEST_CASE("slcp prior lies in the box") {
  SlcpModel slcp;
  const Tensor t = prior_sample(slcp, 10000, 1);
  CHECK(t.rows() == 10000);
  CHECK(t.cols() == 5);
  for (double v : t.values()) {
    CHECK(v >= -3.0);
    CHECK(v <= 3.0);
  }
  for (std::size_t i = 0; i < 100; ++i) CHECK(slcp.in_support(t.row(i)));
}

TEST_CASE("conjugate prior mean") {
  ConjugateGaussianModel model;
  const Tensor t = prior_sample(model, 100000, 2);
  const auto ms = mean_se(t.values());
  CHECK(std::abs(ms.mean) < 4.0 / std::sqrt(1e5));
}

TEST_CASE("prior sampling is reproducible") {
  TwoMoonsModel model;
  CHECK(prior_sample(model, 50, 3) == prior_sample(model, 50, 3));
  CHECK_FALSE(prior_sample(model, 50, 3) == prior_sample(model, 50, 4));
}

TEST_CASE("output dimensions") {
  for (const auto& name : model_names()) {
    CAPTURE(name);
    const auto model = make_model(name);
    const Tensor theta = prior_sample(*model, 1, 5);
    const Tensor y = simulate(*model, theta.row(0), 6);
    CHECK(y.size() == model->data_dim());
  }
  CHECK(SlcpModel().data_dim() == 8);
  CHECK(TwoMoonsModel().data_dim() == 2);
  CHECK(ConjugateGaussianModel().data_dim() == 1);
  CHECK(GridToyModel().data_dim() == 40);
  CHECK_THROWS(make_model("nope"));
}

TEST_CASE("simulate rejects thetas outside the support") {
  CHECK_THROWS_AS(simulate(TwoMoonsModel(), std::vector<double>{1.5, 0.0}, 1), SupportError);
  CHECK_THROWS_AS(simulate(SlcpModel(), std::vector<double>{0, 0, 0, 0, 3.5}, 1), SupportError);
}

TEST_CASE("noise-free conjugate model returns theta") {
  ConjugateGaussianModel model(0.0, 1.0, 0.0);
  for (double theta : {-1.3, 0.0, 2.7}) CHECK(simulate(model, std::vector<double>{theta}, 9)[0] == theta);
}

TEST_CASE("datasets") {
  ConjugateGaussianModel model;
  const auto a = generate_dataset(model, 1000, 1);
  CHECK(a.size() == 1000);
  CHECK(a.model == "conjugate_gaussian");
  CHECK(a.seed == 1);
  const auto b = generate_dataset(model, 1000, 2);
  std::set<double> seen(a.theta.values().begin(), a.theta.values().end());
  for (double v : b.theta.values()) CHECK(seen.count(v) == 0);
  CHECK(generate_dataset(model, 1000, 1).theta == a.theta);
  CHECK(correlation(a.theta.values(), a.y.values()) > 0.0);
  // corr(theta, y) = 1 / sqrt(2) under the defaults.
  const auto big = generate_dataset(model, 20000, 3);
  CHECK(correlation(big.theta.values(), big.y.values()) == doctest::Approx(std::sqrt(0.5)).epsilon(0.03));
}

TEST_CASE("analytic gaussian posterior") {
  const auto p = analytic_posterior_gaussian(0.0, 1.0, 1.0, 2.0);
  CHECK(p.mean == doctest::Approx(1.0));
  CHECK(p.sd == doctest::Approx(std::sqrt(0.5)));
  const auto vague = analytic_posterior_gaussian(0.3, 2.0, 1e8, 5.0);
  CHECK(vague.mean == doctest::Approx(0.3));
  CHECK(vague.sd == doctest::Approx(2.0));
  const auto dogmatic = analytic_posterior_gaussian(0.3, 1e-8, 1.0, 5.0);
  CHECK(dogmatic.mean == doctest::Approx(0.3));
  CHECK(dogmatic.sd < 1e-7);
  CHECK_THROWS(analytic_posterior_gaussian(0.0, 0.0, 1.0, 1.0));
  CHECK_THROWS(analytic_posterior_gaussian(0.0, 1.0, 0.0, 1.0));
}

TEST_CASE("exact conjugate posterior sampler") {
  ConjugateGaussianModel model;
  Rng rng(1);
  const Tensor draws = *model.sample_exact_posterior(std::vector<double>{2.0}, 50000, rng);
  const auto ms = mean_se(draws.values());
  CHECK(std::abs(ms.mean - 1.0) < 4 * ms.se);
  CHECK(ms.se * std::sqrt(50000.0) == doctest::Approx(std::sqrt(0.5)).epsilon(0.02));
}

TEST_CASE("simulations are finite for prior draws") {
  for (const auto& name : model_names()) {
    CAPTURE(name);
    const auto model = make_model(name);
    const auto data = generate_dataset(*model, 100000, 11);
    bool finite = true;
    for (double v : data.y.values()) finite = finite && std::isfinite(v);
    for (double v : data.theta.values()) finite = finite && std::isfinite(v);
    CHECK(finite);
    std::size_t outside = 0;
    for (std::size_t i = 0; i < data.size(); ++i) outside += !model->in_support(data.theta.row(i));
    CHECK(outside == 0);
  }
}

TEST_CASE("slcp likelihood moments") {
  const std::vector<double> theta{0.5, -1.0, 1.2, 0.8, 0.6};
  const auto cov = SlcpModel::covariance(theta);
  CHECK(cov[0] == doctest::Approx(std::pow(1.44, 2)));
  CHECK(cov[3] == doctest::Approx(std::pow(0.64, 2)));
  CHECK(cov[1] == doctest::Approx(std::tanh(0.6) * 1.44 * 0.64));
  CHECK(cov[2] == cov[1]);

  SlcpModel slcp;
  Rng rng(4);
  const std::size_t draws = 100000;
  std::vector<double> xs, ys;
  std::vector<double> y(8);
  for (std::size_t i = 0; i < draws; ++i) {
    slcp.simulate(theta, rng, y);
    for (int k = 0; k < 4; ++k) {
      xs.push_back(y[2 * k]);
      ys.push_back(y[2 * k + 1]);
    }
  }
  const auto mx = mean_se(xs), my = mean_se(ys);
  CHECK(std::abs(mx.mean - 0.5) < 4 * mx.se);
  CHECK(std::abs(my.mean + 1.0) < 4 * my.se);
  const double n = static_cast<double>(xs.size());
  double cxx = 0, cxy = 0, cyy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx.mean, dy = ys[i] - my.mean;
    cxx += dx * dx;
    cxy += dx * dy;
    cyy += dy * dy;
  }
  cxx /= n - 1;
  cxy /= n - 1;
  cyy /= n - 1;
  // Standard errors of Gaussian sample covariances.
  CHECK(std::abs(cxx - cov[0]) < 4 * cov[0] * std::sqrt(2.0 / n));
  CHECK(std::abs(cyy - cov[3]) < 4 * cov[3] * std::sqrt(2.0 / n));
  CHECK(std::abs(cxy - cov[1]) < 4 * std::sqrt((cov[0] * cov[3] + cov[1] * cov[1]) / n));
}

TEST_CASE("two moons radius at theta = 0") {
  TwoMoonsModel model;
  Rng rng(5);
  std::vector<double> radius;
  std::vector<double> y(2);
  for (int i = 0; i < 100000; ++i) {
    model.simulate(std::vector<double>{0.0, 0.0}, rng, y);
    radius.push_back(std::hypot(y[0] - TwoMoonsModel::kOffset, y[1]));
    CHECK(y[0] >= TwoMoonsModel::kOffset - 1e-12);  // right half of the annulus
  }
  const auto r = mean_se(radius);
  CHECK(std::abs(r.mean - 0.1) < 4 * r.se);
}

TEST_CASE("grid toy cross covariance") {
  GridToyModel model;
  const Tensor& a = model.forward_operator();
  const Tensor& c = model.prior_covariance();
  // Banded 3-cell moving average.
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 40; ++j)
      if (i > j + 1 || j > i + 1) CHECK(a.at(i, j) == 0.0);
  CHECK(c.at(3, 3) == doctest::Approx(1.0));
  CHECK(c.at(3, 8) == doctest::Approx(std::exp(-0.5)));

  const auto data = generate_dataset(model, 100000, 6);
  const std::size_t n = data.size();
  std::vector<double> mt(40, 0.0), my(40, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < 40; ++k) {
      mt[k] += data.theta.at(r, k) / n;
      my[k] += data.y.at(r, k) / n;
    }
  double worst = 0.0;
  for (std::size_t i = 0; i < 40; i += 3)
    for (std::size_t j = 0; j < 40; j += 3) {
      double emp = 0.0;
      for (std::size_t r = 0; r < n; ++r) emp += (data.y.at(r, i) - my[i]) * (data.theta.at(r, j) - mt[j]);
      emp /= static_cast<double>(n - 1);
      double expected = 0.0;
      for (std::size_t k = 0; k < 40; ++k) expected += a.at(i, k) * c.at(k, j);
      worst = std::max(worst, std::abs(emp - expected));
    }
  // Entry standard errors are about 1/sqrt(n) ~ 0.003.
  CHECK(worst < 0.02);
}

TEST_CASE("grid toy exact posterior is consistent with the prior") {
  GridToyModel model;
  CHECK(model.parameter_grid() == std::vector<std::size_t>{40});
  const auto data = generate_dataset(model, 1, 7);
  const auto mean = *model.posterior_mean(data.y.row(0));
  Rng rng(8);
  const Tensor draws = *model.sample_exact_posterior(data.y.row(0), 20000, rng);
  for (std::size_t k = 0; k < 40; k += 7) {
    const auto ms = mean_se(column(draws, k));
    CHECK(std::abs(ms.mean - mean[k]) < 4 * ms.se);
  }
}

TEST_CASE("two moons rejection sampler concentrates near the truth") {
  TwoMoonsModel model;
  const Tensor y = simulate(model, std::vector<double>{0.3, 0.2}, 12);
  const Tensor draws = rejection_sample_posterior(model, y.values(), 500, 13);
  CHECK(draws.rows() == 500);
  for (std::size_t i = 0; i < draws.rows(); ++i) CHECK(model.in_support(draws.row(i)));
  // Every accepted draw must put y on its crescent: radius near 0.1, right half.
  const double y0 = y[0], y1 = y[1];
  for (std::size_t i = 0; i < draws.rows(); ++i) {
    const double t1 = draws.at(i, 0), t2 = draws.at(i, 1);
    const double px = y0 + std::abs(t1 + t2) / std::numbers::sqrt2 - TwoMoonsModel::kOffset;
    const double py = y1 - (t2 - t1) / std::numbers::sqrt2;
    CHECK(std::abs(std::hypot(px, py) - 0.1) < 0.06);
    CHECK(px > -0.02);
  }
}

TEST_CASE("dataset file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "srlfi_test_ds";
  std::filesystem::create_directories(dir);
  const auto data = generate_dataset(SlcpModel(), 37, 9);
  save_dataset(data, dir / "d.ds");
  const auto back = load_dataset(dir / "d.ds");
  CHECK(back.model == data.model);
  CHECK(back.seed == data.seed);
  CHECK(back.theta == data.theta);
  CHECK(back.y == data.y);

  std::ostringstream csv;
  write_dataset_csv(csv, data);
  const std::string header = csv.str().substr(0, csv.str().find('\n'));
  CHECK(header.rfind("theta_", 0) == 0);
  CHECK(header.find("y_7") != std::string::npos);

  std::filesystem::resize_file(dir / "d.ds", 100);
  CHECK_THROWS_AS(load_dataset(dir / "d.ds"), FormatError);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
