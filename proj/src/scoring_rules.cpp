#include "srlfi/scoring_rules.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "srlfi/errors.hpp"

namespace srlfi {

namespace {

void require_draws(const Tensor& samples, std::size_t obs_size, const char* who) {
  if (samples.rank() != 2)
    throw ShapeError(std::string(who) + ": samples must be an m x p matrix, got " +
                     shape_string(samples.shape()));
  if (samples.shape()[0] < 2)
    throw std::invalid_argument(std::string(who) + ": needs m >= 2 draws, got " +
                                std::to_string(samples.shape()[0]));
  if (samples.shape()[1] != obs_size)
    throw ShapeError(std::string(who) + ": samples " + shape_string(samples.shape()) +
                     " do not match observation of size " + std::to_string(obs_size));
}

ad::Var obs_row(ad::Tape& tape, const Tensor& obs) {
  return tape.constant(obs.reshaped({1, obs.size()}));
}

template <class F>
double on_scratch_tape(const Tensor& samples, F&& f) {
  ad::Tape tape;
  return f(tape.constant(samples)).value().item();
}

}  // namespace

void PatchLayout::validate() const {
  if (grid.empty() || grid.size() > 2)
    throw std::invalid_argument("patch layout: grid must be 1D or 2D");
  if (patch_size == 0 || patch_step == 0)
    throw std::invalid_argument("patch layout: size and step must be >= 1");
  for (auto extent : grid) {
    if (patch_size > extent)
      throw std::invalid_argument("patch layout: patch size " + std::to_string(patch_size) +
                                  " exceeds grid extent " + std::to_string(extent));
    if ((extent - patch_size) % patch_step != 0)
      throw std::invalid_argument("patch layout: (extent - size) = " +
                                  std::to_string(extent - patch_size) +
                                  " not divisible by step " + std::to_string(patch_step));
  }
  if (!(w1 > 0.0) || !(w2 > 0.0))
    throw std::invalid_argument("patch layout: weights w1, w2 must be positive");
}

std::size_t PatchLayout::grid_size() const {
  std::size_t n = 1;
  for (auto e : grid) n *= e;
  return n;
}

std::string describe(const ScoringRule& rule) {
  std::ostringstream out;
  auto base = [&](const BaseScore& b) {
    if (auto* e = std::get_if<EnergyScoreParams>(&b))
      out << "energy(beta=" << e->beta << ")";
    else
      out << "kernel(gamma=" << std::get<KernelScoreParams>(b).gamma << ")";
  };
  if (auto* e = std::get_if<EnergyScoreParams>(&rule))
    base(*e);
  else if (auto* k = std::get_if<KernelScoreParams>(&rule))
    base(*k);
  else {
    const auto& p = std::get<PatchedScoreParams>(rule);
    out << "patched(";
    base(p.base);
    out << ", size=" << p.layout.patch_size << ", step=" << p.layout.patch_step
        << ", w1=" << p.layout.w1 << ", w2=" << p.layout.w2 << ")";
  }
  return out.str();
}

ad::Var energy_score_estimate(ad::Var samples, const Tensor& obs, double beta) {
  if (!(beta > 0.0 && beta < 2.0))
    throw std::invalid_argument("energy score: beta must lie in (0, 2), got " + std::to_string(beta));
  require_draws(samples.value(), obs.size(), "energy score");
  ad::Tape& tape = *samples.tape();
  const double m = static_cast<double>(samples.value().shape()[0]);
  const double half = beta / 2.0;
  ad::Var to_obs = ad::power(ad::pairwise_sqdist(samples, obs_row(tape, obs)), half, kDistanceGradEps);
  // Diagonal distances are exactly zero, so summing the full matrix equals
  // the off-diagonal sum.
  ad::Var within = ad::power(ad::pairwise_sqdist(samples, samples), half, kDistanceGradEps);
  return ad::scale(ad::sum(to_obs), 2.0 / m) - ad::scale(ad::sum(within), 1.0 / (m * (m - 1.0)));
}

double energy_score_estimate(const Tensor& samples, const Tensor& obs, double beta) {
  return on_scratch_tape(samples, [&](ad::Var s) { return energy_score_estimate(s, obs, beta); });
}

ad::Var kernel_score_estimate(ad::Var samples, const Tensor& obs, const KernelScoreParams& params) {
  if (!(params.gamma > 0.0))
    throw std::invalid_argument("kernel score: gamma must be positive, got " +
                                std::to_string(params.gamma));
  require_draws(samples.value(), obs.size(), "kernel score");
  ad::Tape& tape = *samples.tape();
  const double m = static_cast<double>(samples.value().shape()[0]);
  const double c = -1.0 / (2.0 * params.gamma * params.gamma);
  ad::Var k_obs = ad::exp(ad::scale(ad::pairwise_sqdist(samples, obs_row(tape, obs)), c));
  ad::Var k_within = ad::exp(ad::scale(ad::pairwise_sqdist(samples, samples), c));
  // The m diagonal entries are exactly k(x, x) = 1.
  ad::Var off_diag = ad::sum(k_within) - tape.constant(Tensor::scalar(m));
  return ad::scale(off_diag, 1.0 / (m * (m - 1.0))) - ad::scale(ad::sum(k_obs), 2.0 / m);
}

double kernel_score_estimate(const Tensor& samples, const Tensor& obs,
                             const KernelScoreParams& params) {
  return on_scratch_tape(samples, [&](ad::Var s) { return kernel_score_estimate(s, obs, params); });
}

double gaussian_kernel_eval(std::span<const double> a, std::span<const double> b, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gaussian kernel: gamma must be positive");
  if (a.size() != b.size()) throw ShapeError("gaussian kernel: vectors differ in length");
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-d2 / (2.0 * gamma * gamma));
}

namespace {

void validate_geometry(const PatchLayout& layout) {
  PatchLayout probe = layout;
  probe.w1 = probe.w2 = 1.0;
  probe.validate();
}

}  // namespace

std::vector<std::vector<std::size_t>> patch_layout_indices(const PatchLayout& layout) {
  validate_geometry(layout);
  const std::size_t size = layout.patch_size, step = layout.patch_step;
  std::vector<std::vector<std::size_t>> patches;
  if (layout.grid.size() == 1) {
    for (std::size_t start = 0; start + size <= layout.grid[0]; start += step) {
      std::vector<std::size_t> idx(size);
      for (std::size_t i = 0; i < size; ++i) idx[i] = start + i;
      patches.push_back(std::move(idx));
    }
    return patches;
  }
  const std::size_t height = layout.grid[0], width = layout.grid[1];
  for (std::size_t r0 = 0; r0 + size <= height; r0 += step) {
    for (std::size_t c0 = 0; c0 + size <= width; c0 += step) {
      std::vector<std::size_t> idx;
      idx.reserve(size * size);
      for (std::size_t r = r0; r < r0 + size; ++r)
        for (std::size_t c = c0; c < c0 + size; ++c) idx.push_back(r * width + c);
      patches.push_back(std::move(idx));
    }
  }
  return patches;
}

namespace {

ad::Var base_estimate(const BaseScore& base, ad::Var samples, const Tensor& obs) {
  if (auto* e = std::get_if<EnergyScoreParams>(&base))
    return energy_score_estimate(samples, obs, e->beta);
  return kernel_score_estimate(samples, obs, std::get<KernelScoreParams>(base));
}

}  // namespace

ad::Var patched_score_estimate(ad::Var samples, const Tensor& obs, const PatchedScoreParams& params) {
  const PatchLayout& layout = params.layout;
  const auto patches = patch_layout_indices(layout);
  if (!(layout.w1 >= 0.0) || !(layout.w2 >= 0.0))
    throw std::invalid_argument("patched score: weights must be non-negative");
  if (obs.size() != layout.grid_size() || samples.value().rank() != 2 ||
      samples.value().shape()[1] != layout.grid_size())
    throw ShapeError("patched score: samples " + shape_string(samples.shape()) + " / observation of size " +
                     std::to_string(obs.size()) + " do not match grid of " +
                     std::to_string(layout.grid_size()) + " cells");
  ad::Var total = ad::scale(base_estimate(params.base, samples, obs), layout.w1);
  ad::Var patch_sum;
  for (const auto& idx : patches) {
    std::vector<double> sub(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) sub[i] = obs[idx[i]];
    ad::Var s = base_estimate(params.base, ad::select_columns(samples, idx), Tensor::vector(sub));
    patch_sum = patch_sum.valid() ? patch_sum + s : s;
  }
  return total + ad::scale(patch_sum, layout.w2);
}

ad::Var score_estimate(const ScoringRule& rule, ad::Var samples, const Tensor& obs) {
  return std::visit(
      [&](const auto& params) -> ad::Var {
        using T = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<T, EnergyScoreParams>)
          return energy_score_estimate(samples, obs, params.beta);
        else if constexpr (std::is_same_v<T, KernelScoreParams>)
          return kernel_score_estimate(samples, obs, params);
        else
          return patched_score_estimate(samples, obs, params);
      },
      rule);
}

double score_estimate(const ScoringRule& rule, const Tensor& samples, const Tensor& obs) {
  return on_scratch_tape(samples, [&](ad::Var s) { return score_estimate(rule, s, obs); });
}

double median_bandwidth(const Tensor& data) {
  if (data.rank() != 2 || data.shape()[0] < 2)
    throw std::invalid_argument("median bandwidth: needs at least two rows");
  const std::size_t n = std::min<std::size_t>(data.shape()[0], 1000);
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    auto a = data.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      auto b = data.row(j);
      double d2 = 0.0;
      for (std::size_t c = 0; c < a.size(); ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
      dists.push_back(std::sqrt(d2));
    }
  }
  const std::size_t half = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(half), dists.end());
  double median = dists[half];
  if (dists.size() % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(half));
    median = 0.5 * (median + lower);
  }
  if (!(median > 0.0))
    throw std::invalid_argument("median bandwidth: degenerate data (median pairwise distance is zero)");
  return median;
}

double exact_energy_score_discrete(const Tensor& support, std::span<const double> probs,
                                   std::span<const double> obs, double beta) {
  if (support.rank() != 2 || support.shape()[0] != probs.size() || support.shape()[1] != obs.size())
    throw ShapeError("exact energy score: support " + shape_string(support.shape()) +
                     " does not match probabilities/observation");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("exact energy score: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("exact energy score: probabilities sum to " + std::to_string(total));
  auto dist_pow = [&](std::span<const double> a, std::span<const double> b) {
    double d2 = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
    return std::pow(d2, beta / 2.0);
  };
  const std::size_t k = probs.size();
  double to_obs = 0.0, within = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    to_obs += probs[i] * dist_pow(support.row(i), obs);
    for (std::size_t j = 0; j < k; ++j) within += probs[i] * probs[j] * dist_pow(support.row(i), support.row(j));
  }
  return 2.0 * to_obs - within;
}

}  // namespace srlfi
