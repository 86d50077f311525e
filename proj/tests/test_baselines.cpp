#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <doctest.h>

#include "drofs/baselines.hpp"
#include "drofs/errors.hpp"
#include "drofs/rng.hpp"

namespace {

struct Design {
  drofs::Matrix x;
  std::vector<double> y;
  std::vector<double> w;  // unit weights by default
};

Design random_design(std::size_t n, std::size_t m, std::uint64_t seed,
                     std::vector<double> beta, double noise) {
  drofs::rng::Stream stream(drofs::rng::derive_key({seed, 0x6c61ULL}));
  Design d;
  d.x = drofs::Matrix(n, m);
  d.y.resize(n);
  d.w.assign(n, 1.0);
  for (std::size_t r = 0; r < n; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      d.x(r, c) = stream.next_gaussian();
      mean += beta[c] * d.x(r, c);
    }
    d.y[r] = mean + noise * stream.next_gaussian();
  }
  return d;
}

// Subgradient optimality of the weighted Lasso objective at the fitted beta.
// Active coordinates must satisfy corr_j = lambda * sign(beta_j); inactive
// ones |corr_j| <= lambda, where corr_j is the weighted residual correlation.
double kkt_violation(const Design& d, const drofs::LassoModel& model) {
  const std::size_t n = d.x.rows;
  const std::size_t m = d.x.cols;
  double w_total = 0.0;
  for (double w : d.w) w_total += w;

  std::vector<double> resid(n);
  for (std::size_t r = 0; r < n; ++r) {
    resid[r] = d.y[r] - drofs::lasso_predict_one(model, d.x.row(r));
  }
  double worst = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    double corr = 0.0;
    for (std::size_t r = 0; r < n; ++r) corr += d.w[r] * d.x(r, c) * resid[r];
    corr /= w_total;
    if (model.beta[c] != 0.0) {
      worst = std::max(worst,
                       std::abs(corr - model.lambda * (model.beta[c] > 0 ? 1.0 : -1.0)));
    } else {
      worst = std::max(worst, std::max(0.0, std::abs(corr) - model.lambda));
    }
  }
  // The intercept is unpenalized, so the weighted residual mean must vanish.
  double resid_mean = 0.0;
  for (std::size_t r = 0; r < n; ++r) resid_mean += d.w[r] * resid[r];
  worst = std::max(worst, std::abs(resid_mean / w_total));
  return worst;
}

double lasso_objective(const Design& d, const drofs::LassoModel& model) {
  double w_total = 0.0;
  for (double w : d.w) w_total += w;
  double quad = 0.0;
  for (std::size_t r = 0; r < d.x.rows; ++r) {
    const double e = d.y[r] - drofs::lasso_predict_one(model, d.x.row(r));
    quad += d.w[r] * e * e;
  }
  double l1 = 0.0;
  for (double b : model.beta) l1 += std::abs(b);
  return quad / (2.0 * w_total) + model.lambda * l1;
}

}  // namespace

TEST_CASE("unpenalized lasso reduces to least squares") {
  const auto d = random_design(300, 3, 1, {2.0, -1.0, 0.5}, 0.0);
  const auto model = drofs::lasso_fit(d.x, d.y, d.w, 0.0);
  CHECK(model.converged);
  CHECK(model.beta[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(model.beta[1] == doctest::Approx(-1.0).epsilon(1e-8));
  CHECK(model.beta[2] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(std::abs(model.intercept) < 1e-8);
}

TEST_CASE("a large enough lambda zeroes every coefficient") {
  const auto d = random_design(100, 4, 3, {1.0, 2.0, -1.5, 0.3}, 0.1);
  // lambda above max_j |(1/n) Σ x_ij (y_i - ybar)| kills all coordinates.
  double y_mean = 0.0;
  for (double v : d.y) y_mean += v;
  y_mean /= static_cast<double>(d.y.size());
  double lambda_max = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    double corr = 0.0;
    for (std::size_t r = 0; r < d.x.rows; ++r) corr += d.x(r, c) * (d.y[r] - y_mean);
    lambda_max = std::max(lambda_max, std::abs(corr) / static_cast<double>(d.x.rows));
  }
  const auto model = drofs::lasso_fit(d.x, d.y, d.w, lambda_max * 1.001);
  for (double b : model.beta) CHECK(b == 0.0);
  CHECK(model.intercept == doctest::Approx(y_mean).epsilon(1e-12));
}

TEST_CASE("soft thresholding shrinks a single standardized feature") {
  // One feature with unit weighted variance: beta = sign(rho) (|rho| - lambda)+
  // where rho is the feature-response covariance.
  const std::size_t n = 400;
  auto d = random_design(n, 1, 5, {1.5}, 0.2);
  // Standardize the column so the closed form applies exactly.
  double mean = 0.0, var = 0.0;
  for (std::size_t r = 0; r < n; ++r) mean += d.x(r, 0);
  mean /= n;
  for (std::size_t r = 0; r < n; ++r) var += (d.x(r, 0) - mean) * (d.x(r, 0) - mean);
  var /= n;
  for (std::size_t r = 0; r < n; ++r) d.x(r, 0) = (d.x(r, 0) - mean) / std::sqrt(var);

  double y_mean = 0.0;
  for (double v : d.y) y_mean += v;
  y_mean /= n;
  double rho = 0.0;
  for (std::size_t r = 0; r < n; ++r) rho += d.x(r, 0) * (d.y[r] - y_mean);
  rho /= n;

  for (const double lambda : {0.0, 0.3, 0.9, 2.0}) {
    const auto model = drofs::lasso_fit(d.x, d.y, d.w, lambda);
    const double expect =
        (std::abs(rho) > lambda) ? (rho > 0 ? rho - lambda : rho + lambda) : 0.0;
    CHECK(model.beta[0] == doctest::Approx(expect).scale(1.0).epsilon(1e-8));
  }
}

TEST_CASE("fits satisfy the KKT conditions on random instances") {
  drofs::rng::Stream stream(drofs::rng::derive_key({17, 0x6b6bULL}));
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 30 + stream.next_below(100);
    const std::size_t m = 1 + stream.next_below(8);
    std::vector<double> beta(m);
    for (double& b : beta) b = 2.0 * stream.next_gaussian();
    auto d = random_design(n, m, 1000 + trial, beta, 0.5);
    // Random positive weights exercise the weighted path.
    for (double& w : d.w) w = 0.5 + stream.next_unit();
    const double lambda = 0.05 + 0.4 * stream.next_unit();
    const auto model = drofs::lasso_fit(d.x, d.y, d.w, lambda);
    CHECK(model.converged);
    CHECK(kkt_violation(d, model) < 1e-6);
  }
}

TEST_CASE("sweeps never increase the objective") {
  const auto d = random_design(120, 6, 7, {3.0, 0.0, -2.0, 0.0, 1.0, 0.0}, 0.4);
  double previous = std::numeric_limits<double>::infinity();
  for (const std::size_t sweeps : {1u, 2u, 4u, 8u, 32u}) {
    const auto model = drofs::lasso_fit(d.x, d.y, d.w, 0.2, 0.0, sweeps);
    const double obj = lasso_objective(d, model);
    CHECK(obj <= previous + 1e-12);
    previous = obj;
  }
}

TEST_CASE("doubling every weight changes nothing") {
  auto d = random_design(80, 3, 11, {1.0, -2.0, 0.5}, 0.3);
  const auto base = drofs::lasso_fit(d.x, d.y, d.w, 0.1);
  for (double& w : d.w) w = 2.0;
  const auto doubled = drofs::lasso_fit(d.x, d.y, d.w, 0.1);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(doubled.beta[c] == doctest::Approx(base.beta[c]).scale(1.0).epsilon(1e-10));
  }
  CHECK(doubled.intercept == doctest::Approx(base.intercept).epsilon(1e-10));
}

TEST_CASE("lasso_rank orders by coefficient magnitude") {
  drofs::LassoModel model;
  model.beta = {0.0, 3.0, -5.0};
  CHECK(drofs::lasso_rank(model, 2) == std::vector<std::size_t>{2, 1});
  CHECK(drofs::lasso_rank(model, 3) == std::vector<std::size_t>{2, 1, 0});

  // All-zero fits fall back to index order.
  model.beta = {0.0, 0.0, 0.0};
  CHECK(drofs::lasso_rank(model, 2) == std::vector<std::size_t>{0, 1});

  CHECK_THROWS_AS((void)drofs::lasso_rank(model, 0), drofs::ConfigError);
  CHECK_THROWS_AS((void)drofs::lasso_rank(model, 4), drofs::ConfigError);
}

namespace {

drofs::MultiPopulationData two_population_data(std::uint64_t seed, bool identical) {
  drofs::MultiPopulationData data;
  data.feature_names = {"x0", "x1", "x2"};
  data.target_name = "y";
  for (std::size_t p = 0; p < 2; ++p) {
    drofs::rng::Stream stream(
        drofs::rng::derive_key({seed, identical ? 0 : p, 0x6472ULL}));
    drofs::PopulationDataset pop;
    pop.id = p == 0 ? "A" : "B";
    pop.x = drofs::Matrix(60, 3);
    pop.y.resize(60);
    // When the populations differ, B carries far more target noise, so any
    // pooled fit serves it worse.
    const double noise = identical ? 0.1 : (p == 0 ? 0.05 : 2.0);
    for (std::size_t r = 0; r < 60; ++r) {
      for (std::size_t c = 0; c < 3; ++c) pop.x(r, c) = stream.next_gaussian();
      pop.y[r] = 2.0 * pop.x(r, 0) + noise * stream.next_gaussian();
    }
    data.populations.push_back(std::move(pop));
  }
  return data;
}

}  // namespace

TEST_CASE("dro weights stay uniform when eta is zero") {
  const auto data = two_population_data(3, false);
  const auto result = drofs::dro_lasso(data, 0.05, 0.0, 6);
  REQUIRE(result.history.size() == 7);  // initial weights plus six rounds
  for (const auto& entry : result.history) {
    for (double w : entry.w) CHECK(w == 0.5);
  }
}

TEST_CASE("one multiplicative update matches the closed form") {
  // Per-population losses (1, 0) and eta = ln 2 turn uniform weights into
  // (2/3, 1/3): exp(ln2 * 1) = 2 against exp(0) = 1.
  const double eta = std::log(2.0);
  const std::vector<double> w0 = {0.5, 0.5};
  const std::vector<double> losses = {1.0, 0.0};
  std::vector<double> w(2);
  double total = 0.0;
  for (std::size_t p = 0; p < 2; ++p) {
    w[p] = w0[p] * std::exp(eta * losses[p]);
    total += w[p];
  }
  for (double& v : w) v /= total;
  CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("dro weights move toward the harder population") {
  const auto data = two_population_data(7, false);
  const auto result = drofs::dro_lasso(data, 0.05, 0.5, 10);
  REQUIRE(result.history.size() == 11);
  for (const auto& entry : result.history) {
    double sum = 0.0;
    for (double w : entry.w) {
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  // B's residuals dwarf A's, so its weight must end up dominant.
  const auto& last = result.history.back().w;
  CHECK(last[1] > 0.8);
}

TEST_CASE("identical populations reduce to the pooled lasso") {
  const auto data = two_population_data(9, true);
  const auto result = drofs::dro_lasso(data, 0.1, 0.5, 8);

  // Pool the rows manually and fit once with unit weights.
  drofs::Matrix pooled(120, 3);
  std::vector<double> y(120);
  std::vector<double> w(120, 1.0);
  std::size_t row = 0;
  for (const auto& pop : data.populations) {
    for (std::size_t r = 0; r < pop.size(); ++r, ++row) {
      for (std::size_t c = 0; c < 3; ++c) pooled(row, c) = pop.x(r, c);
      y[row] = pop.y[r];
    }
  }
  const auto direct = drofs::lasso_fit(pooled, y, w, 0.1);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(result.model.beta[c] == doctest::Approx(direct.beta[c]).scale(1.0).epsilon(1e-6));
  }
  // Equal losses keep the weights pinned at one half.
  for (const auto& entry : result.history) {
    CHECK(entry.w[0] == doctest::Approx(0.5).epsilon(1e-9));
  }
}

TEST_CASE("random selection is a deterministic uniform subset") {
  const auto s1 = drofs::random_select(10, 4, 77);
  const auto s2 = drofs::random_select(10, 4, 77);
  CHECK(s1 == s2);
  CHECK(std::is_sorted(s1.begin(), s1.end()));
  CHECK(s1.size() == 4);
  for (std::size_t idx : s1) CHECK(idx < 10);

  const auto all = drofs::random_select(5, 5, 3);
  CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4});

  // Frequency over many seeds: picking 1 of 2 should be close to even.
  std::size_t zero_hits = 0;
  const std::size_t trials = 4000;
  for (std::size_t seed = 0; seed < trials; ++seed) {
    if (drofs::random_select(2, 1, seed)[0] == 0) ++zero_hits;
  }
  const double freq = static_cast<double>(zero_hits) / trials;
  CHECK(freq > 0.48);
  CHECK(freq < 0.52);

  CHECK_THROWS_AS((void)drofs::random_select(5, 0, 1), drofs::ConfigError);
  CHECK_THROWS_AS((void)drofs::random_select(5, 6, 1), drofs::ConfigError);
}
