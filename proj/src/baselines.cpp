#include "drofs/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drofs/detail/stream_tags.hpp"
#include "drofs/errors.hpp"
#include "drofs/rng.hpp"

namespace drofs {

namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace

LassoModel lasso_fit(const Matrix& x, std::span<const double> y,
                     std::span<const double> sample_weights, double lambda, double tol,
                     std::size_t max_sweeps) {
  const std::size_t n = x.rows;
  const std::size_t m = x.cols;
  if (n < 1 || m < 1) throw DataError("lasso_fit: empty design matrix");
  if (y.size() != n || sample_weights.size() != n) {
    throw DataError("lasso_fit: length mismatch");
  }
  if (lambda < 0.0) throw ConfigError("lasso_fit: lambda must be >= 0");

  double w_total = 0.0;
  for (double w : sample_weights) {
    if (w < 0.0 || !std::isfinite(w)) throw DataError("lasso_fit: bad sample weight");
    w_total += w;
  }
  if (!(w_total > 0.0)) throw DataError("lasso_fit: weights sum to zero");
  const double inv_w = 1.0 / w_total;

  // Weighted means, then centered copies. Centering decouples the intercept
  // from the penalized coordinates.
  std::vector<double> x_mean(m, 0.0);
  double y_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = sample_weights[i];
    const auto row = x.row(i);
    for (std::size_t j = 0; j < m; ++j) x_mean[j] += w * row[j];
    y_mean += w * y[i];
  }
  for (auto& v : x_mean) v *= inv_w;
  y_mean *= inv_w;

  Matrix xc(n, m);
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = x.row(i);
    auto dst = xc.row(i);
    for (std::size_t j = 0; j < m; ++j) dst[j] = src[j] - x_mean[j];
    resid[i] = y[i] - y_mean;  // beta starts at zero
  }

  // Per-coordinate curvature (1/W) Σ w xc². Zero-spread columns stay at
  // beta = 0 permanently.
  std::vector<double> denom(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = sample_weights[i];
    const auto row = xc.row(i);
    for (std::size_t j = 0; j < m; ++j) denom[j] += w * row[j] * row[j];
  }
  for (auto& v : denom) v *= inv_w;

  LassoModel model;
  model.beta.assign(m, 0.0);
  model.lambda = lambda;

  for (std::size_t sweep = 1; sweep <= max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (denom[j] == 0.0) continue;
      // rho = (1/W) Σ w xc_ij (resid_i + beta_j xc_ij): the coordinate's
      // weighted correlation with the partial residual.
      double rho = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        rho += sample_weights[i] * xc(i, j) * resid[i];
      }
      rho = rho * inv_w + model.beta[j] * denom[j];
      const double updated = soft_threshold(rho, lambda) / denom[j];
      const double change = updated - model.beta[j];
      if (change != 0.0) {
        for (std::size_t i = 0; i < n; ++i) resid[i] -= change * xc(i, j);
        model.beta[j] = updated;
      }
      max_change = std::max(max_change, std::abs(change));
    }
    model.sweeps = sweep;
    if (max_change < tol) {
      model.converged = true;
      break;
    }
  }

  model.intercept = y_mean;
  for (std::size_t j = 0; j < m; ++j) model.intercept -= model.beta[j] * x_mean[j];
  return model;
}

double lasso_predict_one(const LassoModel& model, std::span<const double> x) {
  if (x.size() != model.beta.size()) throw DataError("lasso_predict: length mismatch");
  double acc = model.intercept;
  for (std::size_t j = 0; j < x.size(); ++j) acc += model.beta[j] * x[j];
  return acc;
}

std::vector<std::size_t> lasso_rank(const LassoModel& model, std::size_t k) {
  const std::size_t m = model.beta.size();
  if (k < 1 || k > m) {
    throw ConfigError("lasso_rank: k " + std::to_string(k) + " outside [1, " +
                      std::to_string(m) + "]");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(model.beta[a]) > std::abs(model.beta[b]);
  });
  order.resize(k);
  return order;
}

DroLassoResult dro_lasso(const MultiPopulationData& data, double lambda, double eta,
                         std::size_t t_max) {
  validate(data);
  if (eta < 0.0) throw ConfigError("dro_lasso: eta must be >= 0");
  if (t_max < 1) throw ConfigError("dro_lasso: t_max must be >= 1");

  const std::size_t num_pops = data.populations.size();
  const std::size_t m = data.num_features();
  const std::size_t n = data.total_rows();

  // Pooled copies with a population index per row.
  Matrix pooled(n, m);
  std::vector<double> y(n);
  std::vector<std::size_t> pop_of(n);
  std::size_t at = 0;
  for (std::size_t p = 0; p < num_pops; ++p) {
    const auto& pop = data.populations[p];
    for (std::size_t r = 0; r < pop.size(); ++r, ++at) {
      const auto src = pop.x.row(r);
      std::copy(src.begin(), src.end(), pooled.row(at).begin());
      y[at] = pop.y[r];
      pop_of[at] = p;
    }
  }

  DroLassoResult out;
  PopulationWeights weights;
  weights.w.assign(num_pops, 1.0 / static_cast<double>(num_pops));
  weights.eta = eta;
  weights.iteration = 0;
  out.history.push_back(weights);

  std::vector<double> sample_weights(n);
  for (std::size_t t = 1; t <= t_max; ++t) {
    for (std::size_t i = 0; i < n; ++i) sample_weights[i] = weights.w[pop_of[i]];
    out.model = lasso_fit(pooled, y, sample_weights, lambda);

    // Unweighted per-population MSE of this round's model.
    std::vector<double> mse(num_pops, 0.0);
    std::vector<std::size_t> count(num_pops, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double err = y[i] - lasso_predict_one(out.model, pooled.row(i));
      mse[pop_of[i]] += err * err;
      count[pop_of[i]] += 1;
    }
    for (std::size_t p = 0; p < num_pops; ++p) mse[p] /= static_cast<double>(count[p]);

    double z = 0.0;
    for (std::size_t p = 0; p < num_pops; ++p) {
      weights.w[p] *= std::exp(eta * mse[p]);
      z += weights.w[p];
    }
    for (auto& w : weights.w) w /= z;
    weights.iteration = t;
    out.history.push_back(weights);
  }
  return out;
}

std::vector<std::size_t> random_select(std::size_t m, std::size_t k, std::uint64_t seed) {
  if (k < 1 || k > m) {
    throw ConfigError("random_select: k " + std::to_string(k) + " outside [1, " +
                      std::to_string(m) + "]");
  }
  std::vector<std::size_t> pool(m);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  rng::Stream stream(rng::derive_key({seed, detail::kPickStreamTag}));
  rng::shuffle(pool, stream);
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace drofs
