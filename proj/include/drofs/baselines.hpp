#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "drofs/dataset.hpp"
#include "drofs/matrix.hpp"

namespace drofs {

// Comparison selectors: pooled Lasso by coordinate descent, its DRO variant
// driven by multiplicative population weights, and a seeded random control.

struct LassoModel {
  std::vector<double> beta;
  double intercept = 0.0;
  double lambda = 0.0;
  bool converged = false;
  std::size_t sweeps = 0;
};

// Weighted Lasso:
//   min_beta (1/(2W)) Σ_i w_i (y_i - b0 - x_iᵀbeta)² + lambda ‖beta‖₁
// with W = Σ w_i. The intercept is handled by weighted centering and stays
// unpenalized. Cyclic coordinate descent with soft-thresholding; stops when
// the largest coordinate change in a sweep drops below tol.
LassoModel lasso_fit(const Matrix& x, std::span<const double> y,
                     std::span<const double> sample_weights, double lambda,
                     double tol = 1e-8, std::size_t max_sweeps = 1000);

double lasso_predict_one(const LassoModel& model, std::span<const double> x);

// k feature indices by descending |beta|, ties to the lower index.
std::vector<std::size_t> lasso_rank(const LassoModel& model, std::size_t k);

struct PopulationWeights {
  std::vector<double> w;  // probability vector over populations
  double eta = 0.0;
  std::size_t iteration = 0;
};

struct DroLassoResult {
  LassoModel model;                        // fit from the final round
  std::vector<PopulationWeights> history;  // iteration 0 (uniform) .. T_max
};

// Multiplicative-weights DRO wrapper around the weighted Lasso. Each round
// fits the pooled model with every sample weighted by its population's
// current weight, scores per-population unweighted MSE, and reweights
// w_p ∝ w_p exp(eta · mse_p). Callers are expected to standardize each
// population independently beforehand.
DroLassoResult dro_lasso(const MultiPopulationData& data, double lambda, double eta,
                         std::size_t t_max);

// Uniform k-subset of {0..m-1} without replacement, ascending order.
std::vector<std::size_t> random_select(std::size_t m, std::size_t k, std::uint64_t seed);

}  // namespace drofs
