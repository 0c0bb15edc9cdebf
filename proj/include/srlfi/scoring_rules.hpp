#pragma once

// Scoring rules S(P, x) and their unbiased estimators from m >= 2 draws of P.
// Conventions follow the statistical-inference literature: the energy score
// is 2 E||X - x||^beta - E||X - X'||^beta and the kernel score is
// E k(X, X') - 2 E k(X, x), both to be minimized.

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "srlfi/autodiff.hpp"
#include "srlfi/tensor.hpp"

namespace srlfi {

struct EnergyScoreParams {
  double beta = 1.0;  // in (0, 2)
};

struct KernelScoreParams {
  double gamma = 1.0;  // Gaussian bandwidth, > 0
};

struct PatchLayout {
  std::vector<std::size_t> grid;  // {length} or {height, width}
  std::size_t patch_size = 1;
  std::size_t patch_step = 1;
  double w1 = 1.0;
  double w2 = 1.0;

  /// Geometry checks plus w1 > 0, w2 > 0.
  void validate() const;
  std::size_t grid_size() const;
};

using BaseScore = std::variant<EnergyScoreParams, KernelScoreParams>;

struct PatchedScoreParams {
  BaseScore base;
  PatchLayout layout;
};

using ScoringRule = std::variant<EnergyScoreParams, KernelScoreParams, PatchedScoreParams>;

std::string describe(const ScoringRule& rule);

/// Gradient regularizer for distances raised to beta < 2 (values unaffected).
inline constexpr double kDistanceGradEps = 1e-12;

ad::Var energy_score_estimate(ad::Var samples, const Tensor& obs, double beta);
double energy_score_estimate(const Tensor& samples, const Tensor& obs, double beta);

ad::Var kernel_score_estimate(ad::Var samples, const Tensor& obs, const KernelScoreParams& params);
double kernel_score_estimate(const Tensor& samples, const Tensor& obs,
                             const KernelScoreParams& params);

double gaussian_kernel_eval(std::span<const double> a, std::span<const double> b, double gamma);

/// Flat (row-major) grid indices of every sliding window, in scan order.
std::vector<std::vector<std::size_t>> patch_layout_indices(const PatchLayout& layout);

/// w1 * S(full) + w2 * sum over patches of S(restricted). Weights may be zero
/// here; strict propriety needs both positive.
ad::Var patched_score_estimate(ad::Var samples, const Tensor& obs, const PatchedScoreParams& params);

ad::Var score_estimate(const ScoringRule& rule, ad::Var samples, const Tensor& obs);
double score_estimate(const ScoringRule& rule, const Tensor& samples, const Tensor& obs);

/// Median pairwise Euclidean distance over the first <= 1000 rows.
double median_bandwidth(const Tensor& data);

/// Closed-form energy score of a finite discrete distribution.
double exact_energy_score_discrete(const Tensor& support, std::span<const double> probs,
                                   std::span<const double> obs, double beta);

}  // namespace srlfi
