#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "drofs/objective.hpp"

// Slow, independent re-derivations of the objective, kept permanently as
// test oracles for the optimized kernels in objective.cpp. Nothing here
// shares code with the production path beyond the RNG stream contract:
// weights use the pairwise-ratio identity instead of max-subtracted
// exponentials, sums run in long double, and neighbor selection is a full
// stable sort. Do not "optimize" this file.

namespace drofs::reference {

// w_j = 1 / Σ_k exp(e_k - e_j), evaluated in long double. Algebraically the
// same normalized Gaussian kernel as objective.cpp's path, numerically an
// independent route that survives extreme exponent spreads.
std::vector<double> kernel_weights(std::span<const double> s, const AlphaVector& alpha,
                                   const Matrix& x_rows);

// Direct transcription of the Monte Carlo estimator, one term at a time.
double population_loss(const AlphaVector& alpha, const PopulationDataset& pop,
                       std::span<const double> mu, const ObjectiveConfig& cfg,
                       std::uint64_t epoch);

ObjectiveValue total_objective(const AlphaVector& alpha, const MultiPopulationData& data_fs,
                               const MuCache& cache, const ObjectiveConfig& cfg,
                               std::uint64_t epoch);

// Central finite differences of the production total_objective, stepped in
// log(alpha) so the relative step is scale-free. The keyed noise streams make
// the perturbed evaluations see identical draws, so this measures the exact
// pathwise gradient the analytic code claims to compute.
std::vector<double> fd_gradient(const AlphaVector& alpha, const MultiPopulationData& data_fs,
                                const MuCache& cache, const ObjectiveConfig& cfg,
                                std::uint64_t epoch, double log_step = 1e-4);

}  // namespace drofs::reference
