#include "drofs/objective.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "drofs/errors.hpp"
#include "drofs/fastmath.hpp"
#include "drofs/detail/stream_tags.hpp"
#include "drofs/rng.hpp"

namespace drofs {

namespace {

void check_alpha(const AlphaVector& alpha, std::size_t m) {
  if (alpha.size() != m) throw ConfigError("alpha length does not match feature count");
  for (double v : alpha.values) {
    if (!std::isfinite(v) || v < kAlphaMin) {
      throw ConfigError("alpha entries must be finite and >= alpha_min");
    }
  }
}

// Exponent of one candidate row against the noisy query:
// -0.5 Σ_c (x_c - s_c)² / alpha_c.
double row_exponent(const double* __restrict xr, const double* __restrict s,
                    const double* __restrict inv_alpha, std::size_t m) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t c = 0; c < m; ++c) {
    const double d = xr[c] - s[c];
    acc += d * d * inv_alpha[c];
  }
  return -0.5 * acc;
}

// Scratch reused across the queries handled by one thread.
struct QueryScratch {
  std::vector<double> s;       // noisy query row
  std::vector<double> expo;    // exponents
  std::vector<double> w;       // unnormalized weights
  std::vector<double> a_acc;   // Σ_k c_k d_k,c²
  std::vector<double> b_acc;   // Σ_k c_k d_k,c
  std::vector<std::pair<double, std::uint32_t>> dist;  // neighbor selection
  std::vector<std::uint32_t> nbr;

  QueryScratch(std::size_t n, std::size_t m, std::size_t k)
      : s(m), expo(n), w(n), a_acc(m), b_acc(m), dist(n), nbr(k) {}
};

// One noisy-row query. Computes the kernel-smoothed mu value g over the
// k_trunc nearest candidate rows (k_trunc == n means every row) and returns
// g². When grad_out is given, adds d(g²)/dalpha for this query into it (not
// scaled or negated; the caller owns averaging and sign).
//
// self_row names the row the query was perturbed from, and that row is
// dropped from the candidate pool. Its distance to the query is pure noise,
// O(1) in every coordinate's alpha, while all other distances blow up as any
// alpha shrinks; left in the pool it dominates the kernel and the smoothed
// value degenerates into an exact lookup of the query's own label, which
// flattens the loss in alpha. Pass self_row >= n to keep every row (the
// single-row case, where nothing else could serve as a neighbor).
//
// Gradient derivation, with d_kc = x_kc - s_c and e_k the exponent:
//   de_k/dalpha_c = 0.5 d_kc²/alpha_c²            (quadratic form path)
//                 + d_kc/alpha_c · eps_c/(2√alpha_c)  (path through s)
//   dg/dalpha_c  = Σ_k w_k (mu_k - g) de_k/dalpha_c
// so with c_k = w_k (mu_k - g): dg = 0.5 A_c/alpha_c² + 0.5 B_c eps_c /
// alpha_c^{3/2}, and d(g²) = 2 g dg.
double query_eval(const Matrix& x, const double* mu, const double* s,
                  const double* eps_row, const double* inv_alpha,
                  const double* inv_sqrt_alpha, std::size_t k_trunc,
                  std::size_t self_row, QueryScratch& ws, double* grad_out) {
  const std::size_t n = x.rows;
  const std::size_t m = x.cols;
  const bool truncate = k_trunc < n;

  // One pass over the candidate rows yields both the kernel exponent and the
  // plain Euclidean distance used for neighbor screening; the two share every
  // per-coordinate difference, so computing them separately would double the
  // memory traffic.
  for (std::size_t r = 0; r < n; ++r) {
    const double* __restrict xr = x.values.data() + r * m;
    double e = 0.0;
    double d2 = 0.0;
#pragma omp simd reduction(+ : e, d2)
    for (std::size_t c = 0; c < m; ++c) {
      const double d = xr[c] - s[c];
      d2 += d * d;
      e += d * d * inv_alpha[c];
    }
    ws.expo[r] = -0.5 * e;
    if (truncate) ws.dist[r] = {d2, static_cast<std::uint32_t>(r)};
  }

  if (self_row < n) {
    // Both exclusion routes in one place: the infinite distance keeps the row
    // out of any truncated neighborhood (k_trunc < n leaves enough finite
    // candidates), and the -inf exponent zeroes its weight exactly when the
    // full pool is used. exp_nonpos maps -inf to 0, and the zero weight
    // short-circuits the gradient accumulation below.
    ws.expo[self_row] = -std::numeric_limits<double>::infinity();
    if (truncate) ws.dist[self_row].first = std::numeric_limits<double>::infinity();
  }

  std::size_t cnt = n;
  if (truncate) {
    // The neighborhood is a set, not a ranking, so introselect is enough to
    // find it; ties in distance break toward the lower row index through the
    // pair comparison. Sorting the chosen indices restores a scan order that
    // walks the candidate matrix forward in memory.
    std::nth_element(ws.dist.begin(), ws.dist.begin() + k_trunc, ws.dist.end());
    for (std::size_t i = 0; i < k_trunc; ++i) ws.nbr[i] = ws.dist[i].second;
    std::sort(ws.nbr.begin(), ws.nbr.begin() + k_trunc);
    // nbr is ascending, so each selected exponent sits at or past its slot
    // and the compaction never overwrites an entry it still needs.
    for (std::size_t i = 0; i < k_trunc; ++i) ws.expo[i] = ws.expo[ws.nbr[i]];
    cnt = k_trunc;
  }

  double peak = ws.expo[0];
  for (std::size_t i = 1; i < cnt; ++i) peak = std::max(peak, ws.expo[i]);
  for (std::size_t i = 0; i < cnt; ++i) ws.expo[i] -= peak;
  fastmath::exp_array(ws.expo.data(), ws.w.data(), cnt);

  double z = 0.0;
  double g_sum = 0.0;
  for (std::size_t i = 0; i < cnt; ++i) {
    const std::size_t k = truncate ? ws.nbr[i] : i;
    z += ws.w[i];
    g_sum += ws.w[i] * mu[k];
  }
  const double g = g_sum / z;

  if (grad_out != nullptr) {
    std::fill(ws.a_acc.begin(), ws.a_acc.end(), 0.0);
    std::fill(ws.b_acc.begin(), ws.b_acc.end(), 0.0);
    double* __restrict a_acc = ws.a_acc.data();
    double* __restrict b_acc = ws.b_acc.data();
    for (std::size_t i = 0; i < cnt; ++i) {
      const std::size_t k = truncate ? ws.nbr[i] : i;
      const double ck = ws.w[i] * (mu[k] - g);
      if (ck == 0.0) continue;  // underflowed weight: exact no-op
      const double* __restrict xr = x.values.data() + k * m;
#pragma omp simd
      for (std::size_t c = 0; c < m; ++c) {
        const double d = xr[c] - s[c];
        b_acc[c] += ck * d;
        a_acc[c] += ck * d * d;
      }
    }
    const double scale = 2.0 * g / z;
    for (std::size_t c = 0; c < m; ++c) {
      grad_out[c] += scale * (0.5 * inv_alpha[c] * inv_alpha[c] * a_acc[c] +
                              0.5 * inv_alpha[c] * inv_sqrt_alpha[c] * eps_row[c] *
                                  b_acc[c]);
    }
  }
  return g * g;
}

struct PopulationEval {
  double loss = 0.0;
  std::vector<double> grad;  // populated only when requested
};

PopulationEval eval_population(const AlphaVector& alpha, const Matrix& x,
                               std::span<const double> mu, const ObjectiveConfig& cfg,
                               std::uint64_t epoch, std::uint64_t pop_key,
                               bool want_grad, Execution exec) {
  const std::size_t n = x.rows;
  const std::size_t m = x.cols;
  const std::size_t b = cfg.mc_samples;
  const std::size_t k_trunc = cfg.knn;

  if (b < 1) throw ConfigError("mc_samples must be >= 1");
  if (k_trunc < 1) throw ConfigError("knn must be >= 1");
  if (k_trunc > n) {
    throw ConfigError("knn truncation " + std::to_string(k_trunc) + " exceeds rows " +
                      std::to_string(n));
  }
  if (mu.size() != n) throw DataError("mu cache length does not match population rows");
  const bool truncate = k_trunc < n;
  // Queries never match their own source row unless it is the only row.
  const bool drop_self = n >= 2;

  std::vector<double> sqrt_alpha(m), inv_alpha(m), inv_sqrt_alpha(m);
  for (std::size_t c = 0; c < m; ++c) {
    sqrt_alpha[c] = std::sqrt(alpha[c]);
    inv_alpha[c] = 1.0 / alpha[c];
    inv_sqrt_alpha[c] = 1.0 / sqrt_alpha[c];
  }

  std::vector<double> eps(n * m);
  std::vector<double> loss_slot(n);
  std::vector<double> grad_slot(want_grad ? n * m : 0);

  double loss_sum = 0.0;
  std::vector<double> grad_sum(want_grad ? m : 0, 0.0);

  for (std::size_t rep = 0; rep < b; ++rep) {
    rng::Stream stream(
        rng::derive_key({cfg.seed, epoch, pop_key, rep, detail::kNoiseStreamTag}));
    for (double& v : eps) v = stream.next_gaussian();
    if (want_grad) std::fill(grad_slot.begin(), grad_slot.end(), 0.0);

#pragma omp parallel if (exec == Execution::parallel)
    {
      QueryScratch ws(n, m, truncate ? k_trunc : 0);
#pragma omp for schedule(static)
      for (std::int64_t j = 0; j < static_cast<std::int64_t>(n); ++j) {
        const double* eps_row = eps.data() + j * m;
        const double* xr = x.values.data() + j * m;
        for (std::size_t c = 0; c < m; ++c) {
          ws.s[c] = xr[c] + sqrt_alpha[c] * eps_row[c];
        }
        loss_slot[j] = query_eval(x, mu.data(), ws.s.data(), eps_row,
                                  inv_alpha.data(), inv_sqrt_alpha.data(), k_trunc,
                                  drop_self ? static_cast<std::size_t>(j) : n, ws,
                                  want_grad ? grad_slot.data() + j * m : nullptr);
      }
    }

    // Fixed-order reduction: replicate-major, then row index. This keeps the
    // result bit-identical between serial and parallel execution.
    for (std::size_t j = 0; j < n; ++j) loss_sum += loss_slot[j];
    if (want_grad) {
      for (std::size_t j = 0; j < n; ++j) {
        const double* gs = grad_slot.data() + j * m;
        for (std::size_t c = 0; c < m; ++c) grad_sum[c] += gs[c];
      }
    }
  }

  const double scale = -1.0 / (static_cast<double>(b) * static_cast<double>(n));
  PopulationEval out;
  out.loss = scale * loss_sum;
  if (!std::isfinite(out.loss)) throw NumericError("population loss is not finite");
  if (want_grad) {
    out.grad.resize(m);
    for (std::size_t c = 0; c < m; ++c) {
      out.grad[c] = scale * grad_sum[c];
      if (!std::isfinite(out.grad[c])) throw NumericError("gradient is not finite");
    }
  }
  return out;
}

void check_cache(const MultiPopulationData& data, const MuCache& cache) {
  if (cache.values.size() != data.populations.size()) {
    throw DataError("mu cache population count mismatch");
  }
  for (std::size_t p = 0; p < cache.values.size(); ++p) {
    if (cache.values[p].size() != data.populations[p].size()) {
      throw DataError("mu cache row count mismatch in population '" +
                      data.populations[p].id + "'");
    }
  }
}

}  // namespace

void clamp_alpha(AlphaVector& alpha) {
  for (double& v : alpha.values) {
    if (!(v >= kAlphaMin)) v = kAlphaMin;  // also catches NaN
  }
}

std::vector<double> kernel_weights(std::span<const double> s, const AlphaVector& alpha,
                                   const Matrix& x_rows) {
  const std::size_t r = x_rows.rows;
  const std::size_t m = x_rows.cols;
  if (r < 1) throw DataError("kernel_weights: no rows");
  if (s.size() != m) throw DataError("kernel_weights: query length mismatch");
  check_alpha(alpha, m);

  std::vector<double> inv_alpha(m);
  for (std::size_t c = 0; c < m; ++c) inv_alpha[c] = 1.0 / alpha[c];

  std::vector<double> expo(r);
  for (std::size_t k = 0; k < r; ++k) {
    expo[k] = row_exponent(x_rows.values.data() + k * m, s.data(), inv_alpha.data(), m);
  }
  const double peak = *std::max_element(expo.begin(), expo.end());
  for (double& e : expo) e -= peak;

  std::vector<double> w(r);
  fastmath::exp_array(expo.data(), w.data(), r);
  double z = 0.0;
  for (double v : w) z += v;
  for (double& v : w) v /= z;
  return w;
}

double population_loss(const AlphaVector& alpha, const PopulationDataset& pop,
                       std::span<const double> mu, const ObjectiveConfig& cfg,
                       std::uint64_t epoch, Execution exec) {
  check_alpha(alpha, pop.x.cols);
  return eval_population(alpha, pop.x, mu, cfg, epoch, rng::hash_string(pop.id),
                         /*want_grad=*/false, exec)
      .loss;
}

double aggregate_losses(std::span<const double> losses, double beta) {
  if (losses.empty()) throw ConfigError("aggregate_losses: no losses");
  if (std::isinf(beta)) return *std::max_element(losses.begin(), losses.end());
  if (!(beta > 0.0)) throw ConfigError("beta must be positive or inf");

  double peak = losses[0] * beta;
  for (double l : losses) peak = std::max(peak, l * beta);
  double z = 0.0, acc = 0.0;
  for (double l : losses) {
    const double w = std::exp(beta * l - peak);
    z += w;
    acc += w * l;
  }
  return acc / z;
}

std::vector<double> aggregation_weights(std::span<const double> losses, double beta) {
  if (losses.empty()) throw ConfigError("aggregation_weights: no losses");
  std::vector<double> w(losses.size(), 0.0);
  if (std::isinf(beta)) {
    const std::size_t arg = static_cast<std::size_t>(
        std::max_element(losses.begin(), losses.end()) - losses.begin());
    w[arg] = 1.0;  // max_element picks the lowest index on ties
    return w;
  }
  if (!(beta > 0.0)) throw ConfigError("beta must be positive or inf");

  double peak = losses[0] * beta;
  for (double l : losses) peak = std::max(peak, l * beta);
  double z = 0.0;
  for (std::size_t p = 0; p < losses.size(); ++p) {
    w[p] = std::exp(beta * losses[p] - peak);
    z += w[p];
  }
  double agg = 0.0;
  for (std::size_t p = 0; p < losses.size(); ++p) {
    w[p] /= z;
    agg += w[p] * losses[p];
  }
  // dA/dL_q for A = Σ σ_p L_p with σ = softmax(beta L).
  for (std::size_t p = 0; p < losses.size(); ++p) {
    w[p] = w[p] * (1.0 + beta * (losses[p] - agg));
  }
  return w;
}

RegValue regularizer(const AlphaVector& alpha, RegKind kind) {
  RegValue out;
  out.gradient.assign(alpha.size(), 0.0);
  if (kind == RegKind::none) return out;

  double sum = 0.0;
  for (double v : alpha.values) sum += v;
  if (!(sum > 0.0)) throw NumericError("regularizer: alpha sum must be positive");
  out.value = 1.0 / sum;
  const double g = -1.0 / (sum * sum);
  std::fill(out.gradient.begin(), out.gradient.end(), g);
  return out;
}

ObjectiveValue total_objective(const AlphaVector& alpha, const MultiPopulationData& data_fs,
                               const MuCache& cache, const ObjectiveConfig& cfg,
                               std::uint64_t epoch, Execution exec) {
  validate(data_fs);
  check_cache(data_fs, cache);
  check_alpha(alpha, data_fs.num_features());

  ObjectiveValue out;
  out.per_population.reserve(data_fs.populations.size());
  for (std::size_t p = 0; p < data_fs.populations.size(); ++p) {
    out.per_population.push_back(population_loss(alpha, data_fs.populations[p],
                                                 cache.values[p], cfg, epoch, exec));
  }
  out.aggregate = aggregate_losses(out.per_population, cfg.beta);
  out.regularizer = regularizer(alpha, cfg.reg_kind).value;
  out.total = out.aggregate + cfg.lambda * out.regularizer;
  return out;
}

ObjectiveEval evaluate_objective(const AlphaVector& alpha, const MultiPopulationData& data_fs,
                                 const MuCache& cache, const ObjectiveConfig& cfg,
                                 std::uint64_t epoch, Execution exec) {
  validate(data_fs);
  check_cache(data_fs, cache);
  const std::size_t m = data_fs.num_features();
  check_alpha(alpha, m);
  const std::size_t num_pops = data_fs.populations.size();

  ObjectiveEval out;
  out.gradient.assign(m, 0.0);
  std::vector<std::vector<double>> pop_grads(num_pops);

  if (std::isinf(cfg.beta)) {
    // Hardmax: cheap value-only sweep over every population, then a gradient
    // evaluation of the argmax population alone. The keyed noise streams make
    // the second evaluation see the identical replicates.
    for (std::size_t p = 0; p < num_pops; ++p) {
      out.value.per_population.push_back(population_loss(
          alpha, data_fs.populations[p], cache.values[p], cfg, epoch, exec));
    }
    const auto agg_w = aggregation_weights(out.value.per_population, cfg.beta);
    for (std::size_t p = 0; p < num_pops; ++p) {
      if (agg_w[p] == 0.0) continue;
      pop_grads[p] = eval_population(alpha, data_fs.populations[p].x, cache.values[p],
                                     cfg, epoch,
                                     rng::hash_string(data_fs.populations[p].id),
                                     /*want_grad=*/true, exec)
                         .grad;
    }
    for (std::size_t p = 0; p < num_pops; ++p) {
      if (agg_w[p] == 0.0) continue;
      for (std::size_t c = 0; c < m; ++c) out.gradient[c] += agg_w[p] * pop_grads[p][c];
    }
  } else {
    for (std::size_t p = 0; p < num_pops; ++p) {
      auto ev = eval_population(alpha, data_fs.populations[p].x, cache.values[p], cfg,
                                epoch, rng::hash_string(data_fs.populations[p].id),
                                /*want_grad=*/true, exec);
      out.value.per_population.push_back(ev.loss);
      pop_grads[p] = std::move(ev.grad);
    }
    const auto agg_w = aggregation_weights(out.value.per_population, cfg.beta);
    for (std::size_t p = 0; p < num_pops; ++p) {
      for (std::size_t c = 0; c < m; ++c) out.gradient[c] += agg_w[p] * pop_grads[p][c];
    }
  }

  out.value.aggregate = aggregate_losses(out.value.per_population, cfg.beta);
  const RegValue reg = regularizer(alpha, cfg.reg_kind);
  out.value.regularizer = reg.value;
  out.value.total = out.value.aggregate + cfg.lambda * reg.value;
  for (std::size_t c = 0; c < m; ++c) out.gradient[c] += cfg.lambda * reg.gradient[c];
  return out;
}

std::vector<double> objective_gradient(const AlphaVector& alpha,
                                       const MultiPopulationData& data_fs,
                                       const MuCache& cache, const ObjectiveConfig& cfg,
                                       std::uint64_t epoch, Execution exec) {
  return evaluate_objective(alpha, data_fs, cache, cfg, epoch, exec).gradient;
}

}  // namespace drofs
