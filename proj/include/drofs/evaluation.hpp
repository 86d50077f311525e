#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drofs/dataset.hpp"
#include "drofs/mu_model.hpp"
#include "drofs/objective.hpp"
#include "drofs/optimizer.hpp"

namespace drofs {

// Downstream harness: given a feature subset, train a fresh predictor per
// population on the train split and score it on the test split. The predictor
// choices mirror the conditional-mean models so every selector is judged by
// the same yardstick.

struct DownstreamConfig {
  MuKind model_kind = MuKind::knn;
  std::size_t knn_k = 10;        // clamped to the population's train size
  double ridge_penalty = 1e-3;
};

struct PopulationMetrics {
  std::string population_id;
  double mse = 0.0;
  double r2 = 0.0;
  std::size_t n_test = 0;
};

struct Metrics {
  std::vector<PopulationMetrics> per_population;
  double worst_mse = 0.0;  // max over populations
  double worst_r2 = 0.0;   // min over populations
};

// Restrict X to the selected columns, fit per population on splits.train,
// score on splits.test. R² is 1 - mse/var(y_test) with the population
// variance convention, reported as 0 when the test target is constant.
Metrics downstream_evaluate(const SplitBundle& splits, std::span<const std::size_t> selected,
                            const DownstreamConfig& cfg);

// Everything one (method, seed) pipeline cell needs. The objective and
// optimizer seeds are overridden by the run seed; the neighbor count is
// clamped to the smallest selection-split population.
struct PipelineConfig {
  std::size_t budget = 5;
  ObjectiveConfig objective;
  OptimizerConfig optimizer;
  MuConfig mu;
  DownstreamConfig downstream;
  double lasso_lambda = 0.01;
  double dro_lasso_eta = 0.1;
  std::size_t dro_lasso_rounds = 20;
  std::size_t random_repeats = 10;  // subsets drawn per seed by the control
  Execution exec = Execution::parallel;
  bool parallel_seeds = false;  // seeds fan out over threads; merge order is fixed
};

// Known method names for run_pipeline_seed / compare_methods.
inline constexpr const char* kMethodDrofs = "drofs";
inline constexpr const char* kMethodLasso = "lasso";
inline constexpr const char* kMethodDroLasso = "dro_lasso";
inline constexpr const char* kMethodRandom = "random";

struct MethodRun {
  std::string method;
  std::vector<std::size_t> selected;  // first draw when the method resamples
  Metrics metrics;                    // averaged over draws for "random"
  AlphaVector alpha;                  // filled by "drofs" only
  OptimizationTrace trace;            // filled by "drofs" only
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<MethodRun> methods;
};

// One seed's full pipeline: split, run each selector on the selection split,
// evaluate each selection downstream. The caller decides standardization of
// `data`; the DRO-Lasso branch re-standardizes its selection split per
// population as that selector requires.
SeedRun run_pipeline_seed(const MultiPopulationData& data, std::span<const std::string> methods,
                          std::uint64_t seed, const PipelineConfig& cfg);

// One row of the cross-seed summary. `population` is a population id or the
// literal "worst" for the per-seed worst-case row.
struct ComparisonCell {
  std::string method;
  std::string population;
  double mse_mean = 0.0;
  double mse_std = 0.0;
  double r2_mean = 0.0;
  double r2_std = 0.0;
  std::size_t n_seeds = 0;
};

struct ComparisonTable {
  std::vector<ComparisonCell> cells;  // method-major, populations in data order
  std::vector<SeedRun> runs;          // per-seed detail behind the summary
};

ComparisonTable compare_methods(const MultiPopulationData& data,
                                std::span<const std::string> methods,
                                std::span<const std::uint64_t> seeds, const PipelineConfig& cfg);

}  // namespace drofs
