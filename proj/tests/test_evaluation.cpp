#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "drofs/baselines.hpp"
#include "drofs/errors.hpp"
#include "drofs/evaluation.hpp"
#include "drofs/rng.hpp"
#include "drofs/synthetic.hpp"

namespace {

// Two populations where y depends on features 0 and 1 only, linearly, with a
// choosable noise level. Feature 2 is a distractor.
drofs::MultiPopulationData linear_data(std::size_t n_per_pop, double noise,
                                       std::uint64_t seed) {
  drofs::MultiPopulationData data;
  data.feature_names = {"x0", "x1", "x2"};
  data.target_name = "y";
  for (std::size_t p = 0; p < 2; ++p) {
    drofs::rng::Stream stream(drofs::rng::derive_key({seed, p, 0x6576ULL}));
    drofs::PopulationDataset pop;
    pop.id = p == 0 ? "A" : "B";
    pop.x = drofs::Matrix(n_per_pop, 3);
    pop.y.resize(n_per_pop);
    const double s0 = p == 0 ? 1.5 : -0.5;
    for (std::size_t r = 0; r < n_per_pop; ++r) {
      for (std::size_t c = 0; c < 3; ++c) pop.x(r, c) = stream.next_gaussian();
      pop.y[r] = s0 * pop.x(r, 0) + 0.7 * pop.x(r, 1) + noise * stream.next_gaussian();
    }
    data.populations.push_back(std::move(pop));
  }
  return data;
}

}  // namespace

TEST_CASE("ridge downstream nails a noiseless linear target") {
  const auto data = linear_data(200, 0.0, 1);
  const auto splits = drofs::split_dataset(data, 4);
  drofs::DownstreamConfig cfg;
  cfg.model_kind = drofs::MuKind::ridge;
  cfg.ridge_penalty = 1e-10;
  const std::vector<std::size_t> selected = {0, 1};
  const auto metrics = drofs::downstream_evaluate(splits, selected, cfg);
  REQUIRE(metrics.per_population.size() == 2);
  for (const auto& pm : metrics.per_population) {
    CHECK(pm.mse < 1e-10);
    CHECK(pm.r2 > 0.999);
    CHECK(pm.n_test > 0);
  }
  CHECK(metrics.worst_mse < 1e-10);
  CHECK(metrics.worst_r2 > 0.999);
}

TEST_CASE("informationless features score near zero r2") {
  const auto data = linear_data(1300, 0.0, 2);
  const auto splits = drofs::split_dataset(data, 5);
  drofs::DownstreamConfig cfg;  // knn
  const std::vector<std::size_t> distractor = {2};
  const auto metrics = drofs::downstream_evaluate(splits, distractor, cfg);
  for (const auto& pm : metrics.per_population) {
    CHECK(pm.n_test >= 100);
    CHECK(pm.r2 < 0.05);
  }
}

TEST_CASE("knn with k equal to the train size predicts the train mean") {
  const auto data = linear_data(500, 0.1, 3);
  const auto splits = drofs::split_dataset(data, 6);
  drofs::DownstreamConfig cfg;
  cfg.model_kind = drofs::MuKind::knn;
  cfg.knn_k = 100000;  // clamped to each population's train size
  const std::vector<std::size_t> selected = {0, 1, 2};
  const auto metrics = drofs::downstream_evaluate(splits, selected, cfg);
  // A constant predictor explains nothing: r2 hovers at zero (slightly
  // negative when the train and test means disagree).
  for (const auto& pm : metrics.per_population) {
    CHECK(std::abs(pm.r2) < 0.25);
  }

  // Reproduce population A's number directly.
  const auto* train_a = splits.train.find("A");
  const auto* test_a = splits.test.find("A");
  REQUIRE(train_a != nullptr);
  REQUIRE(test_a != nullptr);
  double train_mean = 0.0;
  for (double v : train_a->y) train_mean += v;
  train_mean /= static_cast<double>(train_a->y.size());
  double mse = 0.0;
  for (double v : test_a->y) mse += (v - train_mean) * (v - train_mean);
  mse /= static_cast<double>(test_a->y.size());
  CHECK(metrics.per_population[0].mse == doctest::Approx(mse).epsilon(1e-9));
}

TEST_CASE("column order inside the selection does not matter") {
  const auto data = linear_data(150, 0.2, 7);
  const auto splits = drofs::split_dataset(data, 8);
  drofs::DownstreamConfig cfg;
  const std::vector<std::size_t> fwd = {0, 1, 2};
  const std::vector<std::size_t> rev = {2, 1, 0};
  const auto m1 = drofs::downstream_evaluate(splits, fwd, cfg);
  const auto m2 = drofs::downstream_evaluate(splits, rev, cfg);
  for (std::size_t p = 0; p < 2; ++p) {
    CHECK(m1.per_population[p].mse ==
          doctest::Approx(m2.per_population[p].mse).epsilon(1e-9));
  }
}

TEST_CASE("r2 is invariant to affine target rescaling") {
  auto data = linear_data(150, 0.3, 9);
  auto scaled = data;
  for (auto& pop : scaled.populations) {
    for (double& v : pop.y) v = 3.5 * v + 2.0;
  }
  const auto s1 = drofs::split_dataset(data, 10);
  const auto s2 = drofs::split_dataset(scaled, 10);
  drofs::DownstreamConfig cfg;
  const std::vector<std::size_t> selected = {0, 1};
  const auto m1 = drofs::downstream_evaluate(s1, selected, cfg);
  const auto m2 = drofs::downstream_evaluate(s2, selected, cfg);
  for (std::size_t p = 0; p < 2; ++p) {
    CHECK(m1.per_population[p].r2 ==
          doctest::Approx(m2.per_population[p].r2).epsilon(1e-9));
    // And the mse scales by exactly the square of the factor.
    CHECK(m2.per_population[p].mse ==
          doctest::Approx(3.5 * 3.5 * m1.per_population[p].mse).epsilon(1e-9));
  }
}

TEST_CASE("selection indices are validated") {
  const auto data = linear_data(60, 0.1, 11);
  const auto splits = drofs::split_dataset(data, 12);
  drofs::DownstreamConfig cfg;
  const std::vector<std::size_t> empty;
  const std::vector<std::size_t> out = {5};
  const std::vector<std::size_t> dup = {1, 1};
  CHECK_THROWS_AS((void)drofs::downstream_evaluate(splits, empty, cfg), drofs::ConfigError);
  CHECK_THROWS_AS((void)drofs::downstream_evaluate(splits, out, cfg), drofs::ConfigError);
  CHECK_THROWS_AS((void)drofs::downstream_evaluate(splits, dup, cfg), drofs::ConfigError);
}

TEST_CASE("a pipeline seed runs every requested method") {
  drofs::synthetic::SyntheticSpec spec;
  spec.dataset = "synthetic1";
  spec.n_total = 300;
  const auto raw = drofs::synthetic::generate(spec, 21);
  const auto data = drofs::standardize(raw, drofs::StandardizeScope::pooled).data;

  drofs::PipelineConfig cfg;
  cfg.budget = 4;
  cfg.objective.mc_samples = 2;
  cfg.objective.knn = 20;
  cfg.optimizer.epochs = 10;
  const std::vector<std::string> methods = {
      drofs::kMethodDrofs, drofs::kMethodLasso, drofs::kMethodDroLasso,
      drofs::kMethodRandom};
  const auto run = drofs::run_pipeline_seed(data, methods, 2, cfg);

  CHECK(run.seed == 2);
  REQUIRE(run.methods.size() == 4);
  for (const auto& method : run.methods) {
    CHECK(method.selected.size() == 4);
    CHECK(method.metrics.per_population.size() == 3);
    CHECK(std::isfinite(method.metrics.worst_mse));
  }
  CHECK(run.methods[0].method == drofs::kMethodDrofs);
  CHECK(run.methods[0].alpha.size() == data.num_features());
  CHECK(run.methods[0].trace.rows.size() == 10);
  // Baselines carry no alpha trajectory.
  CHECK(run.methods[1].alpha.size() == 0);
  CHECK(run.methods[1].trace.rows.empty());
}

TEST_CASE("worst-case metrics match the per-population extremes") {
  const auto data = linear_data(120, 0.2, 13);
  const auto splits = drofs::split_dataset(data, 3);
  drofs::DownstreamConfig cfg;
  const std::vector<std::size_t> selected = {0};
  const auto metrics = drofs::downstream_evaluate(splits, selected, cfg);
  double max_mse = -1.0;
  double min_r2 = 2.0;
  for (const auto& pm : metrics.per_population) {
    max_mse = std::max(max_mse, pm.mse);
    min_r2 = std::min(min_r2, pm.r2);
  }
  CHECK(metrics.worst_mse == max_mse);
  CHECK(metrics.worst_r2 == min_r2);
}

TEST_CASE("a single-seed comparison table reproduces the pipeline run") {
  drofs::synthetic::SyntheticSpec spec;
  spec.dataset = "synthetic1";
  spec.n_total = 240;
  const auto raw = drofs::synthetic::generate(spec, 33);
  const auto data = drofs::standardize(raw, drofs::StandardizeScope::pooled).data;

  drofs::PipelineConfig cfg;
  cfg.budget = 3;
  const std::vector<std::string> methods = {drofs::kMethodLasso};
  const std::vector<std::uint64_t> seeds = {6};
  const auto table = drofs::compare_methods(data, methods, seeds, cfg);
  const auto run = drofs::run_pipeline_seed(data, methods, 6, cfg);

  REQUIRE(table.runs.size() == 1);
  CHECK(table.runs[0].methods[0].selected == run.methods[0].selected);

  // Rows: one per population plus the "worst" row, all with n_seeds 1 and
  // zero spread.
  REQUIRE(table.cells.size() == 4);
  for (const auto& cell : table.cells) {
    CHECK(cell.method == drofs::kMethodLasso);
    CHECK(cell.n_seeds == 1);
    CHECK(cell.mse_std == 0.0);
  }
  const auto& worst = table.cells.back();
  CHECK(worst.population == "worst");
  CHECK(worst.mse_mean == run.methods[0].metrics.worst_mse);
  CHECK(worst.r2_mean == run.methods[0].metrics.worst_r2);
  for (std::size_t p = 0; p < 3; ++p) {
    CHECK(table.cells[p].population == data.populations[p].id);
    CHECK(table.cells[p].mse_mean == run.methods[0].metrics.per_population[p].mse);
  }
}

TEST_CASE("serial and parallel seed fan-out produce identical tables") {
  drofs::synthetic::SyntheticSpec spec;
  spec.dataset = "synthetic1";
  spec.n_total = 240;
  const auto raw = drofs::synthetic::generate(spec, 35);
  const auto data = drofs::standardize(raw, drofs::StandardizeScope::pooled).data;

  drofs::PipelineConfig cfg;
  cfg.budget = 3;
  cfg.objective.mc_samples = 2;
  cfg.objective.knn = 15;
  cfg.optimizer.epochs = 5;
  const std::vector<std::string> methods = {drofs::kMethodDrofs, drofs::kMethodRandom};
  const std::vector<std::uint64_t> seeds = {1, 2, 3};

  cfg.parallel_seeds = false;
  const auto serial = drofs::compare_methods(data, methods, seeds, cfg);
  cfg.parallel_seeds = true;
  const auto parallel = drofs::compare_methods(data, methods, seeds, cfg);

  REQUIRE(serial.cells.size() == parallel.cells.size());
  for (std::size_t i = 0; i < serial.cells.size(); ++i) {
    CHECK(serial.cells[i].method == parallel.cells[i].method);
    CHECK(serial.cells[i].population == parallel.cells[i].population);
    CHECK(serial.cells[i].mse_mean == parallel.cells[i].mse_mean);
    CHECK(serial.cells[i].mse_std == parallel.cells[i].mse_std);
    CHECK(serial.cells[i].r2_mean == parallel.cells[i].r2_mean);
  }
}

TEST_CASE("repeated method names yield identical rows") {
  const auto data = linear_data(120, 0.2, 15);
  drofs::PipelineConfig cfg;
  cfg.budget = 2;
  const std::vector<std::string> methods = {drofs::kMethodRandom, drofs::kMethodRandom};
  const std::vector<std::uint64_t> seeds = {4};
  const auto table = drofs::compare_methods(data, methods, seeds, cfg);
  const auto run0 = table.runs[0].methods[0];
  const auto run1 = table.runs[0].methods[1];
  CHECK(run0.selected == run1.selected);
  CHECK(run0.metrics.worst_mse == run1.metrics.worst_mse);
}

TEST_CASE("unknown methods and bad budgets are rejected") {
  const auto data = linear_data(60, 0.1, 17);
  drofs::PipelineConfig cfg;
  const std::vector<std::string> unknown = {"pca"};
  CHECK_THROWS_AS((void)drofs::run_pipeline_seed(data, unknown, 1, cfg),
                  drofs::ConfigError);

  cfg.budget = 9;  // only 3 features exist
  const std::vector<std::string> ok = {drofs::kMethodRandom};
  CHECK_THROWS_AS((void)drofs::run_pipeline_seed(data, ok, 1, cfg), drofs::ConfigError);
}
