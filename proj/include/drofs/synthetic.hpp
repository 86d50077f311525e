#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drofs/dataset.hpp"

namespace drofs::synthetic {

// Built-in benchmark generators. Three families:
//   synthetic1: linear outcomes, 3 populations, signs of the shared block
//               flipped between A and B; min 15 features.
//   synthetic2: nonlinear outcomes and heterogeneous noise, 4 populations;
//               min 50 features.
//   synthetic3: sparse linear outcomes on disjoint index sets with AR(1)
//               feature correlation; min 50 features.

struct SyntheticSpec {
  std::string dataset;      // "synthetic1" | "synthetic2" | "synthetic3"
  std::size_t n_total = 0;  // rows across all populations
  std::size_t dim = 0;      // 0 means the dataset's minimum
  double noise_scale = 1.0; // scales every population's noise term; 0 gives exact means
};

// Smallest feature count each generator supports.
std::size_t min_dim(const std::string& dataset);

// Population shares, normalized to sum to 1, in generation order.
std::vector<std::pair<std::string, double>> proportions(const std::string& dataset);

// Row counts per population: floor of the share, leftovers assigned by
// largest fractional remainder (earlier population wins ties).
std::vector<std::size_t> population_sizes(const std::string& dataset, std::size_t n_total);

// Noise-free conditional mean of the target for one feature row. Exposed so
// tests can compare fitted conditional-mean models against ground truth.
double true_mean(const std::string& dataset, const std::string& population_id,
                 std::span<const double> x);

// Draw the full dataset. Per-population RNG streams are keyed by
// (seed, population id), so the draw for population B does not change if A's
// size or the population order changes.
MultiPopulationData generate(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace drofs::synthetic
