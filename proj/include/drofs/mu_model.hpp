#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drofs/dataset.hpp"
#include "drofs/matrix.hpp"

namespace drofs {

// Per-population conditional mean estimate used inside the objective. Fitted
// once on the feature-selection split and frozen; the optimizer never refits.

enum class MuKind { knn, ridge };

struct MuConfig {
  MuKind kind = MuKind::knn;
  // knn: 0 means auto = min(10, n_p); an explicit value must be in [1, n_p].
  std::size_t knn_k = 0;
  double ridge_penalty = 1e-3;
};

class ConditionalMeanModel {
 public:
  static ConditionalMeanModel fit(const PopulationDataset& pop, const MuConfig& cfg);

  double predict_one(std::span<const double> x) const;
  std::vector<double> predict(const Matrix& x) const;

  MuKind kind() const { return kind_; }
  std::size_t num_features() const;
  std::size_t knn_k() const { return knn_k_; }
  std::span<const double> coefficients() const { return beta_; }
  double intercept() const { return intercept_; }

  // JSON round-trip so an experiment can be resumed without refitting.
  std::string to_json_string() const;
  static ConditionalMeanModel from_json_string(const std::string& text);

 private:
  ConditionalMeanModel() = default;

  MuKind kind_ = MuKind::knn;
  // knn state
  Matrix train_x_;
  std::vector<double> train_y_;
  std::size_t knn_k_ = 0;
  // ridge state
  std::vector<double> beta_;
  double intercept_ = 0.0;
  double ridge_penalty_ = 0.0;
};

// mu evaluated at every feature-selection row, aligned with data.populations.
struct MuCache {
  std::vector<std::vector<double>> values;
};

std::vector<ConditionalMeanModel> fit_conditional_means(const MultiPopulationData& data,
                                                        const MuConfig& cfg);

MuCache build_mu_cache(const std::vector<ConditionalMeanModel>& models,
                       const MultiPopulationData& data);

// Shared dense linear algebra helper: solves (A)x = b for symmetric positive
// definite A via Cholesky. A is n×n row-major, overwritten. Throws
// NumericError when A is not positive definite.
std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b,
                                   std::size_t n);

}  // namespace drofs
