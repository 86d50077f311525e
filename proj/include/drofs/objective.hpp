#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "drofs/dataset.hpp"
#include "drofs/matrix.hpp"
#include "drofs/mu_model.hpp"

namespace drofs {

// Noise floor for alpha. The weight exponents divide by alpha, so entries are
// projected to at least this throughout; small enough that "no degradation"
// holds to numerical precision.
inline constexpr double kAlphaMin = 1e-6;

// Per-feature noise variances. The optimization variable: small alpha means
// the feature survives selection, large alpha means it is drowned out.
struct AlphaVector {
  std::vector<double> values;

  AlphaVector() = default;
  explicit AlphaVector(std::vector<double> v) : values(std::move(v)) {}
  static AlphaVector constant(std::size_t m, double v) {
    return AlphaVector(std::vector<double>(m, v));
  }

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

// Project onto the feasible set (every entry ≥ kAlphaMin).
void clamp_alpha(AlphaVector& alpha);

enum class RegKind { reciprocal_l1, none };

enum class Execution { serial, parallel };

struct ObjectiveConfig {
  std::size_t mc_samples = 10;  // Monte Carlo replicates per evaluation
  std::size_t knn = 1000;       // neighbor truncation of the inner sum
  double beta = std::numeric_limits<double>::infinity();  // softmax temperature; inf = hardmax
  double lambda = 0.0;          // regularizer weight
  RegKind reg_kind = RegKind::reciprocal_l1;
  std::uint64_t seed = 0;
};

struct ObjectiveValue {
  std::vector<double> per_population;
  double aggregate = 0.0;
  double regularizer = 0.0;
  double total = 0.0;
};

struct ObjectiveEval {
  ObjectiveValue value;
  std::vector<double> gradient;
};

// Posterior weight of each row of x_rows for a noisy observation s:
// w_j ∝ exp(-0.5 (x_j - s)ᵀ diag(alpha)⁻¹ (x_j - s)), normalized to sum 1.
// Stable under extreme exponents (max subtraction before exponentiation).
std::vector<double> kernel_weights(std::span<const double> s, const AlphaVector& alpha,
                                   const Matrix& x_rows);

// Monte Carlo loss of one population:
//   -(1/(b·n)) Σ_ℓ Σ_j ( Σ_k w_k(S_j^ℓ, alpha) mu_k )²
// where S^ℓ = X + sqrt(alpha) ⊙ ε^ℓ noises every row, and the inner sum runs
// over the cfg.knn nearest training rows of each noisy row, never including
// row j itself (a noisy copy sits at noise distance from its source whatever
// alpha is, so self-matches would reduce the kernel to an alpha-independent
// lookup). A single-row population keeps its one row. Noise streams are keyed
// by (cfg.seed, epoch, population id, replicate): bit-deterministic and
// independent of population order or thread count.
double population_loss(const AlphaVector& alpha, const PopulationDataset& pop,
                       std::span<const double> mu, const ObjectiveConfig& cfg,
                       std::uint64_t epoch, Execution exec = Execution::parallel);

// beta = inf: max over losses. Finite beta: Σ σ_p L_p with σ = softmax(beta·L).
double aggregate_losses(std::span<const double> losses, double beta);

// d(aggregate)/d(losses). For beta = inf this is the indicator of the argmax
// (ties resolved to the lowest index).
std::vector<double> aggregation_weights(std::span<const double> losses, double beta);

struct RegValue {
  double value = 0.0;
  std::vector<double> gradient;
};

// reciprocal_l1: value 1/Σα, gradient -1/(Σα)² in every coordinate.
RegValue regularizer(const AlphaVector& alpha, RegKind kind);

ObjectiveValue total_objective(const AlphaVector& alpha, const MultiPopulationData& data_fs,
                               const MuCache& cache, const ObjectiveConfig& cfg,
                               std::uint64_t epoch, Execution exec = Execution::parallel);

// Value and gradient from one shared noise realization. The gradient tracks
// both paths through alpha: the diag(alpha)⁻¹ quadratic form in the weights
// and the sqrt(alpha) ⊙ ε dependence of the noisy points themselves.
ObjectiveEval evaluate_objective(const AlphaVector& alpha, const MultiPopulationData& data_fs,
                                 const MuCache& cache, const ObjectiveConfig& cfg,
                                 std::uint64_t epoch, Execution exec = Execution::parallel);

std::vector<double> objective_gradient(const AlphaVector& alpha,
                                       const MultiPopulationData& data_fs,
                                       const MuCache& cache, const ObjectiveConfig& cfg,
                                       std::uint64_t epoch,
                                       Execution exec = Execution::parallel);

}  // namespace drofs
