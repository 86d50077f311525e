#include "drofs/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "drofs/detail/stream_tags.hpp"
#include "drofs/errors.hpp"
#include "drofs/rng.hpp"

namespace drofs {

AlphaVector init_alpha(std::size_t m, const OptimizerConfig& cfg) {
  if (m < 1) throw ConfigError("init_alpha: need at least one feature");
  if (cfg.init_noise_std < 0.0) throw ConfigError("init_noise_std must be >= 0");

  rng::Stream stream(rng::derive_key({cfg.seed, detail::kInitStreamTag}));
  AlphaVector alpha = AlphaVector::constant(m, cfg.init_center);
  for (std::size_t c = 0; c < m; ++c) {
    alpha[c] += cfg.init_noise_std * stream.next_gaussian();
  }
  clamp_alpha(alpha);
  return alpha;
}

double cosine_lr(std::size_t t, const OptimizerConfig& cfg) {
  const std::size_t t_max = std::max<std::size_t>(1, cfg.epochs);
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(t_max);
  return cfg.lr_min + 0.5 * (cfg.learning_rate - cfg.lr_min) * (1.0 + std::cos(phase));
}

void adam_step(AdamState& state, AlphaVector& alpha, std::span<const double> grad,
               double lr, const OptimizerConfig& cfg) {
  const std::size_t m = alpha.size();
  if (grad.size() != m) throw ConfigError("adam_step: gradient length mismatch");
  if (state.m1.empty()) {
    state.m1.assign(m, 0.0);
    state.m2.assign(m, 0.0);
    state.step = 0;
  }
  if (state.m1.size() != m) throw ConfigError("adam_step: state length mismatch");

  state.step += 1;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t c = 0; c < m; ++c) {
    state.m1[c] = b1 * state.m1[c] + (1.0 - b1) * grad[c];
    state.m2[c] = b2 * state.m2[c] + (1.0 - b2) * grad[c] * grad[c];
    const double m_hat = state.m1[c] / bias1;
    const double v_hat = state.m2[c] / bias2;
    alpha[c] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
  }
  clamp_alpha(alpha);
}

OptimizeResult optimize(const MultiPopulationData& data_fs, const MuCache& cache,
                        const ObjectiveConfig& obj_cfg, const OptimizerConfig& opt_cfg,
                        Execution exec) {
  if (!(opt_cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (opt_cfg.adam_beta1 < 0.0 || opt_cfg.adam_beta1 >= 1.0 || opt_cfg.adam_beta2 < 0.0 ||
      opt_cfg.adam_beta2 >= 1.0) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }

  const std::size_t epochs = std::max<std::size_t>(1, opt_cfg.epochs);
  const std::size_t m = data_fs.num_features();

  OptimizeResult result;
  result.alpha = init_alpha(m, opt_cfg);
  result.trace.rows.reserve(epochs);
  AdamState state;

  for (std::size_t t = 1; t <= epochs; ++t) {
    const double lr = opt_cfg.lr_schedule == LrSchedule::cosine
                          ? cosine_lr(t - 1, opt_cfg)
                          : opt_cfg.learning_rate;
    const ObjectiveEval eval =
        evaluate_objective(result.alpha, data_fs, cache, obj_cfg, t, exec);

    TraceRow row;
    row.epoch = t;
    row.lr = lr;
    row.per_population = eval.value.per_population;
    row.aggregate = eval.value.aggregate;
    row.regularizer = eval.value.regularizer;
    row.total = eval.value.total;
    if (t == 1 || t == epochs || t % 10 == 0) row.alpha = result.alpha.values;
    result.trace.rows.push_back(std::move(row));

    adam_step(state, result.alpha, eval.gradient, lr, opt_cfg);
  }
  return result;
}

std::vector<std::size_t> select_features(const AlphaVector& alpha, std::size_t k) {
  const std::size_t m = alpha.size();
  if (k < 1 || k > m) {
    throw ConfigError("select_features: k " + std::to_string(k) + " outside [1, " +
                      std::to_string(m) + "]");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return alpha[a] < alpha[b];
  });
  order.resize(k);
  return order;
}

}  // namespace drofs
