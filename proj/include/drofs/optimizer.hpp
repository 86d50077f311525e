#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "drofs/objective.hpp"

namespace drofs {

enum class LrSchedule { cosine, constant };

struct OptimizerConfig {
  std::size_t epochs = 200;
  double learning_rate = 0.1;
  LrSchedule lr_schedule = LrSchedule::cosine;
  double lr_min = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double init_center = 1.0;     // alpha starts near this value
  double init_noise_std = 0.1;  // gaussian jitter on the start point
  std::uint64_t seed = 0;
};

// One row per epoch. Alpha snapshots are thinned (first epoch, every 10th,
// last) to bound trace size; the losses describe the alpha the epoch was
// evaluated at, before its update.
struct TraceRow {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  std::vector<double> per_population;
  double aggregate = 0.0;
  double regularizer = 0.0;
  double total = 0.0;
  std::vector<double> alpha;  // empty when thinned out
};

struct OptimizationTrace {
  std::vector<TraceRow> rows;
};

// alpha_i = clamp(init_center + N(0, init_noise_std²)), keyed by cfg.seed.
AlphaVector init_alpha(std::size_t m, const OptimizerConfig& cfg);

// lr_min + 0.5 (lr - lr_min)(1 + cos(pi t / T_max)); t = 0 gives lr, t = T_max
// gives lr_min.
double cosine_lr(std::size_t t, const OptimizerConfig& cfg);

struct AdamState {
  std::vector<double> m1;
  std::vector<double> m2;
  std::size_t step = 0;
};

// Standard bias-corrected Adam update on alpha, followed by projection onto
// alpha >= alpha_min.
void adam_step(AdamState& state, AlphaVector& alpha, std::span<const double> grad,
               double lr, const OptimizerConfig& cfg);

struct OptimizeResult {
  AlphaVector alpha;
  OptimizationTrace trace;
};

// Full-batch loop: evaluate value+gradient at the current alpha (objective
// noise keyed by epoch), Adam step, project. Runs max(1, cfg.epochs) epochs.
OptimizeResult optimize(const MultiPopulationData& data_fs, const MuCache& cache,
                        const ObjectiveConfig& obj_cfg, const OptimizerConfig& opt_cfg,
                        Execution exec = Execution::parallel);

// The k features with the smallest alpha, ascending by value then by index.
std::vector<std::size_t> select_features(const AlphaVector& alpha, std::size_t k);

}  // namespace drofs
