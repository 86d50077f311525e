#include "drofs/mu_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "drofs/errors.hpp"

namespace drofs {

namespace {

// Squared Euclidean distance between a query and one training row.
double dist2(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b,
                                   std::size_t n) {
  if (a.size() != n * n || b.size() != n) {
    throw NumericError("cholesky_solve: shape mismatch");
  }
  // In-place lower Cholesky: A = L Lᵀ.
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) diag -= a[j * n + k] * a[j * n + k];
    if (!(diag > 0.0)) throw NumericError("cholesky_solve: matrix not positive definite");
    const double ljj = std::sqrt(diag);
    a[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = v / ljj;
    }
  }
  // Forward solve L z = b, then backward solve Lᵀ x = z.
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= a[i * n + k] * b[k];
    b[i] = v / a[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double v = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) v -= a[k * n + ii] * b[k];
    b[ii] = v / a[ii * n + ii];
  }
  return b;
}

ConditionalMeanModel ConditionalMeanModel::fit(const PopulationDataset& pop,
                                               const MuConfig& cfg) {
  const std::size_t n = pop.size();
  const std::size_t m = pop.x.cols;
  if (n == 0 || m == 0) throw DataError("fit: empty population");

  ConditionalMeanModel model;
  model.kind_ = cfg.kind;

  if (cfg.kind == MuKind::knn) {
    const std::size_t k = cfg.knn_k == 0 ? std::min<std::size_t>(10, n) : cfg.knn_k;
    if (k < 1 || k > n) {
      throw DataError("knn: k " + std::to_string(k) + " outside [1, " +
                      std::to_string(n) + "]");
    }
    model.train_x_ = pop.x;
    model.train_y_ = pop.y;
    model.knn_k_ = k;
    return model;
  }

  if (n < 2) throw DataError("ridge: needs at least 2 rows");
  // Centered normal equations; the intercept absorbs the means and stays
  // outside the penalty.
  std::vector<double> x_mean(m, 0.0);
  double y_mean = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = pop.x.row(r);
    for (std::size_t c = 0; c < m; ++c) x_mean[c] += row[c];
    y_mean += pop.y[r];
  }
  for (auto& v : x_mean) v /= static_cast<double>(n);
  y_mean /= static_cast<double>(n);

  std::vector<double> gram(m * m, 0.0);
  std::vector<double> rhs(m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = pop.x.row(r);
    const double yc = pop.y[r] - y_mean;
    for (std::size_t i = 0; i < m; ++i) {
      const double xi = row[i] - x_mean[i];
      rhs[i] += xi * yc;
      for (std::size_t j = i; j < m; ++j) {
        gram[i * m + j] += xi * (row[j] - x_mean[j]);
      }
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    gram[i * m + i] += cfg.ridge_penalty;
    for (std::size_t j = 0; j < i; ++j) gram[i * m + j] = gram[j * m + i];
  }

  model.beta_ = cholesky_solve(std::move(gram), std::move(rhs), m);
  model.intercept_ = y_mean;
  for (std::size_t c = 0; c < m; ++c) model.intercept_ -= model.beta_[c] * x_mean[c];
  model.ridge_penalty_ = cfg.ridge_penalty;
  // Keep the feature count for dimension checks on predict.
  model.train_x_ = Matrix(0, m);
  return model;
}

std::size_t ConditionalMeanModel::num_features() const {
  return kind_ == MuKind::knn ? train_x_.cols : beta_.size();
}

double ConditionalMeanModel::predict_one(std::span<const double> x) const {
  if (x.size() != num_features()) throw DataError("predict: feature count mismatch");

  if (kind_ == MuKind::ridge) {
    double acc = intercept_;
    for (std::size_t c = 0; c < beta_.size(); ++c) acc += beta_[c] * x[c];
    return acc;
  }

  const std::size_t n = train_x_.rows;
  // (distance², row index) pairs; the index tie-break keeps predictions
  // deterministic when several rows are equidistant.
  std::vector<std::pair<double, std::size_t>> order(n);
  for (std::size_t r = 0; r < n; ++r) order[r] = {dist2(x, train_x_.row(r)), r};
  std::partial_sort(order.begin(), order.begin() + knn_k_, order.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < knn_k_; ++i) acc += train_y_[order[i].second];
  return acc / static_cast<double>(knn_k_);
}

std::vector<double> ConditionalMeanModel::predict(const Matrix& x) const {
  std::vector<double> out(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) out[r] = predict_one(x.row(r));
  return out;
}

std::string ConditionalMeanModel::to_json_string() const {
  nlohmann::json j;
  if (kind_ == MuKind::knn) {
    j["kind"] = "knn";
    j["knn_k"] = knn_k_;
    j["train_rows"] = train_x_.rows;
    j["train_cols"] = train_x_.cols;
    j["train_x"] = train_x_.values;
    j["train_y"] = train_y_;
  } else {
    j["kind"] = "ridge";
    j["ridge_penalty"] = ridge_penalty_;
    j["coefficients"] = beta_;
    j["intercept"] = intercept_;
  }
  return j.dump();
}

ConditionalMeanModel ConditionalMeanModel::from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model JSON parse failure: ") + e.what());
  }
  try {
    ConditionalMeanModel model;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "knn") {
      model.kind_ = MuKind::knn;
      model.knn_k_ = j.at("knn_k").get<std::size_t>();
      model.train_x_.rows = j.at("train_rows").get<std::size_t>();
      model.train_x_.cols = j.at("train_cols").get<std::size_t>();
      model.train_x_.values = j.at("train_x").get<std::vector<double>>();
      model.train_y_ = j.at("train_y").get<std::vector<double>>();
      if (model.train_x_.values.size() != model.train_x_.rows * model.train_x_.cols ||
          model.train_y_.size() != model.train_x_.rows || model.knn_k_ < 1 ||
          model.knn_k_ > model.train_x_.rows) {
        throw DataError("model JSON: inconsistent knn payload");
      }
    } else if (kind == "ridge") {
      model.kind_ = MuKind::ridge;
      model.ridge_penalty_ = j.at("ridge_penalty").get<double>();
      model.beta_ = j.at("coefficients").get<std::vector<double>>();
      model.intercept_ = j.at("intercept").get<double>();
      model.train_x_ = Matrix(0, model.beta_.size());
    } else {
      throw DataError("model JSON: unknown kind '" + kind + "'");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model JSON schema failure: ") + e.what());
  }
}

std::vector<ConditionalMeanModel> fit_conditional_means(const MultiPopulationData& data,
                                                        const MuConfig& cfg) {
  std::vector<ConditionalMeanModel> models;
  models.reserve(data.populations.size());
  for (const auto& pop : data.populations) {
    models.push_back(ConditionalMeanModel::fit(pop, cfg));
  }
  return models;
}

MuCache build_mu_cache(const std::vector<ConditionalMeanModel>& models,
                       const MultiPopulationData& data) {
  if (models.size() != data.populations.size()) {
    throw DataError("build_mu_cache: one model per population required");
  }
  MuCache cache;
  cache.values.reserve(models.size());
  for (std::size_t p = 0; p < models.size(); ++p) {
    cache.values.push_back(models[p].predict(data.populations[p].x));
    for (double v : cache.values.back()) {
      if (!std::isfinite(v)) {
        throw NumericError("mu cache: non-finite prediction in population '" +
                           data.populations[p].id + "'");
      }
    }
  }
  return cache;
}

}  // namespace drofs
