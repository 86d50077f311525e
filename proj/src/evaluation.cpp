#include "drofs/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <unordered_set>

#include "drofs/baselines.hpp"
#include "drofs/errors.hpp"
#include "drofs/rng.hpp"

namespace drofs {

namespace {

void check_selection(std::span<const std::size_t> selected, std::size_t m) {
  if (selected.empty()) throw ConfigError("downstream_evaluate: empty selection");
  std::unordered_set<std::size_t> seen;
  for (std::size_t idx : selected) {
    if (idx >= m) {
      throw ConfigError("downstream_evaluate: feature index " + std::to_string(idx) +
                        " out of range for " + std::to_string(m) + " features");
    }
    if (!seen.insert(idx).second) {
      throw ConfigError("downstream_evaluate: duplicate feature index " + std::to_string(idx));
    }
  }
}

// Pool a dataset into flat arrays for the Lasso fits.
struct Pooled {
  Matrix x{0, 0};
  std::vector<double> y;
};

Pooled pool(const MultiPopulationData& data) {
  Pooled out;
  out.x = Matrix(data.total_rows(), data.num_features());
  out.y.resize(data.total_rows());
  std::size_t at = 0;
  for (const auto& pop : data.populations) {
    for (std::size_t r = 0; r < pop.size(); ++r, ++at) {
      const auto src = pop.x.row(r);
      std::copy(src.begin(), src.end(), out.x.row(at).begin());
      out.y[at] = pop.y[r];
    }
  }
  return out;
}

std::size_t min_population_rows(const MultiPopulationData& data) {
  std::size_t n = data.populations.front().size();
  for (const auto& pop : data.populations) n = std::min(n, pop.size());
  return n;
}

Metrics average_metrics(const std::vector<Metrics>& draws) {
  Metrics avg = draws.front();
  for (auto& pm : avg.per_population) {
    pm.mse = 0.0;
    pm.r2 = 0.0;
  }
  avg.worst_mse = 0.0;
  avg.worst_r2 = 0.0;
  const double inv = 1.0 / static_cast<double>(draws.size());
  for (const auto& d : draws) {
    for (std::size_t p = 0; p < avg.per_population.size(); ++p) {
      avg.per_population[p].mse += inv * d.per_population[p].mse;
      avg.per_population[p].r2 += inv * d.per_population[p].r2;
    }
    // Worst-case is averaged per draw, not recomputed from the averaged
    // per-population values; a control that is bad on a different population
    // each draw should still read as bad.
    avg.worst_mse += inv * d.worst_mse;
    avg.worst_r2 += inv * d.worst_r2;
  }
  return avg;
}

MethodRun run_method(const std::string& method, const SplitBundle& splits, std::uint64_t seed,
                     const PipelineConfig& cfg) {
  const std::size_t m = splits.fs.num_features();
  MethodRun out;
  out.method = method;

  if (method == kMethodDrofs) {
    // The worst-case aggregation compares per-population losses directly, so
    // the populations must be on a common scale. Rescaling each population's
    // target to unit variance keeps the focus free to move between them;
    // otherwise whichever population has the widest raw target range monopolizes
    // the max and the others' features never receive gradient.
    const MultiPopulationData fs_pp =
        standardize(splits.fs, StandardizeScope::per_population).data;
    const auto models = fit_conditional_means(fs_pp, cfg.mu);
    const MuCache cache = build_mu_cache(models, fs_pp);
    ObjectiveConfig obj = cfg.objective;
    obj.seed = seed;
    obj.knn = std::min(obj.knn, min_population_rows(fs_pp));
    OptimizerConfig opt = cfg.optimizer;
    opt.seed = seed;
    OptimizeResult result = optimize(fs_pp, cache, obj, opt, cfg.exec);
    out.selected = select_features(result.alpha, cfg.budget);
    out.alpha = std::move(result.alpha);
    out.trace = std::move(result.trace);
    out.metrics = downstream_evaluate(splits, out.selected, cfg.downstream);
  } else if (method == kMethodLasso) {
    const Pooled pooled = pool(splits.fs);
    const std::vector<double> unit(pooled.y.size(), 1.0);
    const LassoModel model = lasso_fit(pooled.x, pooled.y, unit, cfg.lasso_lambda);
    out.selected = lasso_rank(model, cfg.budget);
    out.metrics = downstream_evaluate(splits, out.selected, cfg.downstream);
  } else if (method == kMethodDroLasso) {
    // This selector expects each population standardized on its own.
    const MultiPopulationData fs_pp =
        standardize(splits.fs, StandardizeScope::per_population).data;
    const DroLassoResult result =
        dro_lasso(fs_pp, cfg.lasso_lambda, cfg.dro_lasso_eta, cfg.dro_lasso_rounds);
    out.selected = lasso_rank(result.model, cfg.budget);
    out.metrics = downstream_evaluate(splits, out.selected, cfg.downstream);
  } else if (method == kMethodRandom) {
    if (cfg.random_repeats < 1) throw ConfigError("pipeline: random_repeats must be >= 1");
    std::vector<Metrics> draws;
    draws.reserve(cfg.random_repeats);
    for (std::size_t d = 0; d < cfg.random_repeats; ++d) {
      const auto subset = random_select(m, cfg.budget, rng::derive_key({seed, d}));
      if (d == 0) out.selected = subset;
      draws.push_back(downstream_evaluate(splits, subset, cfg.downstream));
    }
    out.metrics = average_metrics(draws);
  } else {
    throw ConfigError("pipeline: unknown method '" + method + "'");
  }
  return out;
}

double sample_std(std::span<const double> values, double mean) {
  if (values.size() < 2) return 0.0;
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

ComparisonCell summarize(const std::string& method, const std::string& population,
                         std::span<const double> mse, std::span<const double> r2) {
  ComparisonCell cell;
  cell.method = method;
  cell.population = population;
  cell.n_seeds = mse.size();
  for (double v : mse) cell.mse_mean += v;
  for (double v : r2) cell.r2_mean += v;
  cell.mse_mean /= static_cast<double>(mse.size());
  cell.r2_mean /= static_cast<double>(r2.size());
  cell.mse_std = sample_std(mse, cell.mse_mean);
  cell.r2_std = sample_std(r2, cell.r2_mean);
  return cell;
}

}  // namespace

Metrics downstream_evaluate(const SplitBundle& splits, std::span<const std::size_t> selected,
                            const DownstreamConfig& cfg) {
  const std::size_t m = splits.train.num_features();
  check_selection(selected, m);
  if (splits.train.populations.size() != splits.test.populations.size()) {
    throw DataError("downstream_evaluate: train/test population mismatch");
  }

  const std::vector<std::size_t> cols(selected.begin(), selected.end());
  Metrics out;
  out.per_population.reserve(splits.train.populations.size());
  for (std::size_t p = 0; p < splits.train.populations.size(); ++p) {
    const auto& train = splits.train.populations[p];
    const auto& test = splits.test.populations[p];
    if (train.id != test.id) {
      throw DataError("downstream_evaluate: population order differs between splits");
    }
    if (train.size() < 1) throw DataError("downstream_evaluate: empty train split for " + train.id);
    if (test.size() < 1) throw DataError("downstream_evaluate: empty test split for " + test.id);

    PopulationDataset train_sel{train.id, select_columns(train.x, cols), train.y};
    const Matrix test_x = select_columns(test.x, cols);

    MuConfig model_cfg;
    model_cfg.kind = cfg.model_kind;
    model_cfg.knn_k = std::min(cfg.knn_k, train.size());
    model_cfg.ridge_penalty = cfg.ridge_penalty;
    const auto model = ConditionalMeanModel::fit(train_sel, model_cfg);

    PopulationMetrics pm;
    pm.population_id = test.id;
    pm.n_test = test.size();
    double y_mean = 0.0;
    for (std::size_t r = 0; r < test.size(); ++r) {
      const double err = test.y[r] - model.predict_one(test_x.row(r));
      pm.mse += err * err;
      y_mean += test.y[r];
    }
    pm.mse /= static_cast<double>(test.size());
    y_mean /= static_cast<double>(test.size());
    double y_var = 0.0;
    for (double v : test.y) y_var += (v - y_mean) * (v - y_mean);
    y_var /= static_cast<double>(test.size());
    pm.r2 = y_var > 0.0 ? 1.0 - pm.mse / y_var : 0.0;
    out.per_population.push_back(std::move(pm));
  }

  out.worst_mse = out.per_population.front().mse;
  out.worst_r2 = out.per_population.front().r2;
  for (const auto& pm : out.per_population) {
    out.worst_mse = std::max(out.worst_mse, pm.mse);
    out.worst_r2 = std::min(out.worst_r2, pm.r2);
  }
  return out;
}

SeedRun run_pipeline_seed(const MultiPopulationData& data, std::span<const std::string> methods,
                          std::uint64_t seed, const PipelineConfig& cfg) {
  if (methods.empty()) throw ConfigError("pipeline: no methods requested");
  validate(data);
  if (cfg.budget < 1 || cfg.budget > data.num_features()) {
    throw ConfigError("pipeline: budget " + std::to_string(cfg.budget) + " outside [1, " +
                      std::to_string(data.num_features()) + "]");
  }

  const SplitBundle splits = split_dataset(data, seed);
  SeedRun run;
  run.seed = seed;
  run.methods.reserve(methods.size());
  for (const auto& method : methods) {
    run.methods.push_back(run_method(method, splits, seed, cfg));
  }
  return run;
}

ComparisonTable compare_methods(const MultiPopulationData& data,
                                std::span<const std::string> methods,
                                std::span<const std::uint64_t> seeds, const PipelineConfig& cfg) {
  if (seeds.empty()) throw ConfigError("compare_methods: no seeds given");

  ComparisonTable table;
  table.runs.resize(seeds.size());
  if (cfg.parallel_seeds) {
    // Exceptions must not unwind across the parallel region; park them and
    // rethrow the earliest seed's failure for a deterministic error too.
    std::vector<std::exception_ptr> errors(seeds.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(seeds.size()); ++i) {
      try {
        table.runs[i] = run_pipeline_seed(data, methods, seeds[i], cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (const auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  } else {
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      table.runs[i] = run_pipeline_seed(data, methods, seeds[i], cfg);
    }
  }

  const std::size_t num_pops = data.populations.size();
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    std::vector<double> mse(seeds.size());
    std::vector<double> r2(seeds.size());
    for (std::size_t p = 0; p < num_pops; ++p) {
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        const auto& pm = table.runs[s].methods[mi].metrics.per_population[p];
        mse[s] = pm.mse;
        r2[s] = pm.r2;
      }
      table.cells.push_back(summarize(methods[mi], data.populations[p].id, mse, r2));
    }
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      mse[s] = table.runs[s].methods[mi].metrics.worst_mse;
      r2[s] = table.runs[s].methods[mi].metrics.worst_r2;
    }
    table.cells.push_back(summarize(methods[mi], "worst", mse, r2));
  }
  return table;
}

}  // namespace drofs
