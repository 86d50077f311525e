#include "drofs/reference.hpp"

#include <algorithm>
#include <cmath>

#include "drofs/detail/stream_tags.hpp"
#include "drofs/errors.hpp"
#include "drofs/rng.hpp"

namespace drofs::reference {

namespace {

long double exponent_ld(std::span<const double> x_row, std::span<const double> s,
                        std::span<const double> alpha) {
  long double acc = 0.0L;
  for (std::size_t c = 0; c < s.size(); ++c) {
    const long double d = static_cast<long double>(x_row[c]) - s[c];
    acc += d * d / alpha[c];
  }
  return -0.5L * acc;
}

}  // namespace

std::vector<double> kernel_weights(std::span<const double> s, const AlphaVector& alpha,
                                   const Matrix& x_rows) {
  const std::size_t r = x_rows.rows;
  if (r < 1) throw DataError("reference kernel_weights: no rows");
  if (s.size() != x_rows.cols || alpha.size() != x_rows.cols) {
    throw DataError("reference kernel_weights: dimension mismatch");
  }

  std::vector<long double> expo(r);
  for (std::size_t k = 0; k < r; ++k) {
    expo[k] = exponent_ld(x_rows.row(k), s, alpha.values);
  }
  std::vector<double> w(r);
  for (std::size_t j = 0; j < r; ++j) {
    long double denom = 0.0L;
    for (std::size_t k = 0; k < r; ++k) denom += std::exp(expo[k] - expo[j]);
    // denom ≥ 1 always (the k = j term), and an overflow to +inf correctly
    // collapses the weight to zero.
    w[j] = static_cast<double>(1.0L / denom);
  }
  return w;
}

double population_loss(const AlphaVector& alpha, const PopulationDataset& pop,
                       std::span<const double> mu, const ObjectiveConfig& cfg,
                       std::uint64_t epoch) {
  const std::size_t n = pop.size();
  const std::size_t m = pop.x.cols;
  if (alpha.size() != m) throw ConfigError("reference: alpha length mismatch");
  if (mu.size() != n) throw DataError("reference: mu length mismatch");
  if (cfg.knn < 1 || cfg.knn > n) throw ConfigError("reference: knn outside [1, n]");

  const std::uint64_t pop_key = rng::hash_string(pop.id);
  long double total = 0.0L;

  for (std::size_t rep = 0; rep < cfg.mc_samples; ++rep) {
    rng::Stream stream(
        rng::derive_key({cfg.seed, epoch, pop_key, rep, detail::kNoiseStreamTag}));
    Matrix eps(n, m);
    for (double& v : eps.values) v = stream.next_gaussian();

    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> s(m);
      for (std::size_t c = 0; c < m; ++c) {
        s[c] = pop.x(j, c) + std::sqrt(alpha[c]) * eps(j, c);
      }

      // Candidate pool: every row except j itself, the one the query was
      // noised from; it stays only when the population has no other row.
      // Then either the whole pool, or the knn closest by plain Euclidean
      // distance with index tie-break, via a full stable sort.
      std::vector<std::size_t> rows;
      rows.reserve(n);
      for (std::size_t k = 0; k < n; ++k) {
        if (k == j && n >= 2) continue;
        rows.push_back(k);
      }
      if (cfg.knn < rows.size()) {
        std::vector<double> d2(n, 0.0);
        for (const std::size_t k : rows) {
          for (std::size_t c = 0; c < m; ++c) {
            const double d = pop.x(k, c) - s[c];
            d2[k] += d * d;
          }
        }
        std::stable_sort(rows.begin(), rows.end(),
                         [&](std::size_t a, std::size_t b) { return d2[a] < d2[b]; });
        rows.resize(cfg.knn);
      }

      Matrix sub(rows.size(), m);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = pop.x.row(rows[i]);
        std::copy(src.begin(), src.end(), sub.row(i).begin());
      }
      const auto w = reference::kernel_weights(s, alpha, sub);
      long double g = 0.0L;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        g += static_cast<long double>(w[i]) * mu[rows[i]];
      }
      total += g * g;
    }
  }

  const long double denom =
      static_cast<long double>(cfg.mc_samples) * static_cast<long double>(n);
  return static_cast<double>(-total / denom);
}

ObjectiveValue total_objective(const AlphaVector& alpha, const MultiPopulationData& data_fs,
                               const MuCache& cache, const ObjectiveConfig& cfg,
                               std::uint64_t epoch) {
  if (cache.values.size() != data_fs.populations.size()) {
    throw DataError("reference: cache population count mismatch");
  }
  ObjectiveValue out;
  for (std::size_t p = 0; p < data_fs.populations.size(); ++p) {
    out.per_population.push_back(
        reference::population_loss(alpha, data_fs.populations[p], cache.values[p], cfg, epoch));
  }

  if (std::isinf(cfg.beta)) {
    out.aggregate = *std::max_element(out.per_population.begin(), out.per_population.end());
  } else {
    // Direct softmax-weighted sum in long double.
    long double z = 0.0L, acc = 0.0L;
    for (double l : out.per_population) {
      const long double w = std::exp(static_cast<long double>(cfg.beta) * l);
      z += w;
      acc += w * l;
    }
    out.aggregate = static_cast<double>(acc / z);
  }

  long double sum = 0.0L;
  for (double v : alpha.values) sum += v;
  out.regularizer = cfg.reg_kind == RegKind::none ? 0.0 : static_cast<double>(1.0L / sum);
  out.total = out.aggregate + cfg.lambda * out.regularizer;
  return out;
}

std::vector<double> fd_gradient(const AlphaVector& alpha, const MultiPopulationData& data_fs,
                                const MuCache& cache, const ObjectiveConfig& cfg,
                                std::uint64_t epoch, double log_step) {
  const std::size_t m = alpha.size();
  std::vector<double> grad(m);
  const double up = std::exp(log_step);
  const double down = std::exp(-log_step);
  for (std::size_t c = 0; c < m; ++c) {
    AlphaVector hi = alpha;
    AlphaVector lo = alpha;
    hi[c] = alpha[c] * up;
    lo[c] = alpha[c] * down;
    const double f_hi = drofs::total_objective(hi, data_fs, cache, cfg, epoch).total;
    const double f_lo = drofs::total_objective(lo, data_fs, cache, cfg, epoch).total;
    grad[c] = (f_hi - f_lo) / (hi[c] - lo[c]);
  }
  return grad;
}

}  // namespace drofs::reference
