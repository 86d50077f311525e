#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drofs/evaluation.hpp"
#include "drofs/synthetic.hpp"

namespace drofs {

// Declarative experiment layer: a JSON config describes the data source and
// every stage's hyperparameters; run_experiment executes the whole pipeline
// per seed and writes a reproducible report bundle. All randomness flows from
// the config seeds, so rerunning a config reproduces the numeric payload
// byte for byte.

struct DataSourceConfig {
  std::string kind = "synthetic1";  // synthetic1 | synthetic2 | synthetic3 | csv
  // synthetic sources
  std::size_t n_total = 3600;
  std::size_t dim = 0;  // 0 means the generator's minimum
  double noise_scale = 1.0;
  // csv sources
  std::string path;
  std::string population_column = "population";
  std::string target_column = "target";

  bool is_csv() const { return kind == "csv"; }
};

// Experiment-layer objective defaults differ from the bare struct: runs get a
// small reciprocal-L1 weight unless the config says otherwise.
inline ObjectiveConfig default_experiment_objective() {
  ObjectiveConfig cfg;
  cfg.lambda = 0.01;
  return cfg;
}

struct ExperimentConfig {
  DataSourceConfig data;
  std::size_t budget = 5;
  ObjectiveConfig objective = default_experiment_objective();
  OptimizerConfig optimizer;
  MuConfig mu;
  DownstreamConfig downstream;
  double lasso_lambda = 0.01;
  double dro_lasso_eta = 0.1;
  std::size_t dro_lasso_rounds = 20;
  std::size_t random_repeats = 10;
  std::vector<std::string> methods = {kMethodDrofs, kMethodLasso, kMethodDroLasso,
                                      kMethodRandom};
  std::vector<std::uint64_t> seeds = {1};
  std::string output_dir = "out";
  bool parallel_seeds = false;
  Execution exec = Execution::parallel;
};

// JSON round-trip. config_from_json throws ConfigError on syntax errors,
// unknown keys, or type mismatches; semantic checks live in validate_config.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

// Collects every violation instead of stopping at the first. Empty means the
// config is runnable.
std::vector<std::string> validate_config(const ExperimentConfig& cfg);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct SelectionReport {
  // Deterministic numeric payload: config echo, per-seed selections, metrics,
  // trace summaries, comparison table. Serialized with sorted keys.
  std::string payload_json;
  // Timings, platform fingerprint, library version. Varies run to run and is
  // excluded from the reproducibility contract.
  std::string meta_json;
  ComparisonTable table;
  std::vector<StageTiming> timings;
};

// Runs the full pipeline for every seed and, when cfg.output_dir is not
// empty, writes report.json, trace.csv, comparison.csv, and alpha.json into
// it. On any stage failure the error is rethrown with a stage tag prepended
// and files already written for this run are removed.
SelectionReport run_experiment(const ExperimentConfig& cfg);

// Finite-difference audit of the analytic gradient on a small synthetic
// instance, exposed as a first-class command so an installation can check
// itself. `corrupt` is a test hook that perturbs the analytic gradient to
// prove the check can fail.
struct GradcheckConfig {
  std::size_t populations = 3;
  std::size_t rows_per_population = 20;
  std::size_t dim = 5;
  std::size_t points = 10;
  double alpha_low = 0.1;
  double alpha_high = 5.0;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
  bool corrupt = false;
};

struct GradcheckReport {
  bool pass = false;
  double max_rel_error = 0.0;
  std::vector<double> per_point;  // relative error at each alpha draw
};

GradcheckReport gradcheck_run(const GradcheckConfig& cfg);

// The instance gradcheck_run audits; exposed for tests that want to poke the
// same data directly.
struct GradcheckInstance {
  MultiPopulationData data;
  MuCache cache;
  ObjectiveConfig objective;
};
GradcheckInstance make_gradcheck_instance(const GradcheckConfig& cfg);

}  // namespace drofs
