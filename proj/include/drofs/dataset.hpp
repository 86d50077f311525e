#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drofs/matrix.hpp"

namespace drofs {

// One population: a design matrix plus its response vector. Population ids
// are opaque strings; everything downstream keys RNG streams off a hash of
// the id so reordering populations never changes results.
struct PopulationDataset {
  std::string id;
  Matrix x;                // n_p rows, m columns
  std::vector<double> y;   // n_p entries

  std::size_t size() const { return x.rows; }
};

struct MultiPopulationData {
  std::vector<PopulationDataset> populations;
  std::vector<std::string> feature_names;
  std::string target_name;

  std::size_t num_features() const { return feature_names.size(); }
  std::size_t total_rows() const;
  const PopulationDataset* find(const std::string& id) const;
};

// Throws DataError on structural problems: empty or duplicate population ids,
// inconsistent feature counts, size mismatches, or non-finite entries.
void validate(const MultiPopulationData& data);

// CSV ingestion. The header must contain `population_column` and
// `target_column`; every other column is a feature, kept in header order.
// Rows are grouped by population id in order of first appearance. Values are
// parsed strictly; a bad or non-finite cell reports row and column.
MultiPopulationData load_csv(const std::string& path,
                             const std::string& population_column = "population",
                             const std::string& target_column = "target");

// Inverse of load_csv, full round-trip precision.
void save_csv(const MultiPopulationData& data, const std::string& path,
              const std::string& population_column = "population",
              const std::string& target_column = "target");

enum class StandardizeScope { pooled, per_population };

// Moments of one standardization group. Uses the population convention
// (divide by n). Columns with zero spread keep std = 1 and are flagged so
// callers can warn instead of dividing by zero.
struct GroupStats {
  std::string population_id;  // empty under pooled scope
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  std::vector<std::uint8_t> feature_constant;
  double target_mean = 0.0;
  double target_std = 1.0;
  bool target_constant = false;
};

struct StandardizationParams {
  StandardizeScope scope = StandardizeScope::pooled;
  std::vector<GroupStats> groups;  // one entry when pooled, one per population otherwise
};

struct StandardizedData {
  MultiPopulationData data;
  StandardizationParams params;
};

// Center and scale features and target. Pooled scope fits one set of moments
// over all rows; per_population fits each population separately.
StandardizedData standardize(const MultiPopulationData& data, StandardizeScope scope);

// Apply previously fitted params to new data (populations must be present in
// the params when scope is per_population).
MultiPopulationData apply_standardization(const MultiPopulationData& data,
                                          const StandardizationParams& params);

// Map a prediction made in standardized target space back to raw units.
double destandardize_target(double value, const StandardizationParams& params,
                            const std::string& population_id);

// Three-way split, applied within each population: floor(0.6 n) rows go to
// the selection part, then floor(0.8 rest) to train and the remainder to
// test. Row order inside each part follows the shuffled permutation. The
// permutation is keyed by (seed, population id), so it is stable under
// population reordering.
struct SplitBundle {
  MultiPopulationData fs;     // feature selection
  MultiPopulationData train;
  MultiPopulationData test;
};

SplitBundle split_dataset(const MultiPopulationData& data, std::uint64_t seed);

}  // namespace drofs
