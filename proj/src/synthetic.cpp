#include "drofs/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drofs/errors.hpp"
#include "drofs/detail/stream_tags.hpp"
#include "drofs/rng.hpp"

namespace drofs::synthetic {

namespace {

struct PopulationSpec {
  const char* id;
  double weight;  // unnormalized share
};

const std::vector<PopulationSpec>& population_specs(const std::string& dataset) {
  static const std::vector<PopulationSpec> ds1 = {{"A", 40}, {"B", 35}, {"C", 25}};
  static const std::vector<PopulationSpec> ds2 = {{"A", 40}, {"B", 35}, {"C", 25}, {"D", 15}};
  static const std::vector<PopulationSpec> ds3 = {{"A", 35}, {"B", 35}, {"C", 30}};
  if (dataset == "synthetic1") return ds1;
  if (dataset == "synthetic2") return ds2;
  if (dataset == "synthetic3") return ds3;
  throw ConfigError("unknown synthetic dataset '" + dataset + "'");
}

double dot_sparse(std::span<const double> x,
                  std::initializer_list<std::pair<std::size_t, double>> terms) {
  double acc = 0.0;
  for (const auto& [idx, coef] : terms) acc += coef * x[idx];
  return acc;
}

}  // namespace

std::size_t min_dim(const std::string& dataset) {
  if (dataset == "synthetic1") return 15;
  if (dataset == "synthetic2" || dataset == "synthetic3") return 50;
  throw ConfigError("unknown synthetic dataset '" + dataset + "'");
}

std::vector<std::pair<std::string, double>> proportions(const std::string& dataset) {
  const auto& specs = population_specs(dataset);
  double total = 0.0;
  for (const auto& s : specs) total += s.weight;
  std::vector<std::pair<std::string, double>> out;
  out.reserve(specs.size());
  for (const auto& s : specs) out.emplace_back(s.id, s.weight / total);
  return out;
}

std::vector<std::size_t> population_sizes(const std::string& dataset, std::size_t n_total) {
  const auto props = proportions(dataset);
  std::vector<std::size_t> sizes(props.size());
  std::vector<double> fractions(props.size());
  std::size_t assigned = 0;
  for (std::size_t p = 0; p < props.size(); ++p) {
    const double share = props[p].second * static_cast<double>(n_total);
    sizes[p] = static_cast<std::size_t>(std::floor(share));
    fractions[p] = share - std::floor(share);
    assigned += sizes[p];
  }
  // Hand out the leftover rows by largest fractional remainder; stable sort
  // keeps the earlier population on ties.
  std::vector<std::size_t> order(props.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fractions[a] > fractions[b]; });
  for (std::size_t i = 0; assigned < n_total; ++i, ++assigned) {
    sizes[order[i % order.size()]] += 1;
  }
  for (std::size_t p = 0; p < sizes.size(); ++p) {
    if (sizes[p] == 0) {
      throw ConfigError("n_total " + std::to_string(n_total) +
                        " leaves population '" + props[p].first + "' empty");
    }
  }
  return sizes;
}

double true_mean(const std::string& dataset, const std::string& population_id,
                 std::span<const double> x) {
  if (x.size() < min_dim(dataset)) {
    throw DataError("feature row shorter than dataset minimum");
  }
  if (dataset == "synthetic1") {
    if (population_id == "A") {
      return dot_sparse(x, {{0, 8.0}, {1, 6.0}, {2, -4.0}, {3, 3.0}, {4, 2.0}});
    }
    if (population_id == "B") {
      return dot_sparse(x, {{0, -8.0}, {1, -6.0}, {2, 4.0}, {3, -3.0}, {4, -2.0},
                            {5, 8.0}, {6, 6.0}});
    }
    if (population_id == "C") {
      return dot_sparse(x, {{7, 10.0}, {8, 8.0}, {9, 6.0}, {10, -5.0}});
    }
  } else if (dataset == "synthetic2") {
    if (population_id == "A" || population_id == "B") {
      return 4.0 * x[0] + 3.0 * x[1] + x[2] * x[2];
    }
    if (population_id == "C") {
      return 2.0 * x[0] + 3.0 * x[5] * x[6] + 4.0 * std::sin(2.0 * x[7]);
    }
    if (population_id == "D") {
      return 3.0 * x[0] + 2.0 * x[1];
    }
  } else if (dataset == "synthetic3") {
    if (population_id == "A") {
      return dot_sparse(x, {{0, 5.0}, {15, 4.0}, {30, 3.0}});
    }
    if (population_id == "B") {
      return dot_sparse(x, {{5, 6.0}, {20, 5.0}, {35, 4.0}});
    }
    if (population_id == "C") {
      return dot_sparse(x, {{10, 7.0}, {25, 6.0}, {40, 5.0}, {45, 4.0}});
    }
  }
  throw ConfigError("dataset '" + dataset + "' has no population '" + population_id + "'");
}

MultiPopulationData generate(const SyntheticSpec& spec, std::uint64_t seed) {
  const std::size_t required = min_dim(spec.dataset);
  const std::size_t dim = spec.dim == 0 ? required : spec.dim;
  if (dim < required) {
    throw ConfigError("dataset '" + spec.dataset + "': dim " + std::to_string(dim) +
                      " below required " + std::to_string(required));
  }
  if (spec.n_total == 0) throw ConfigError("n_total must be positive");
  if (spec.noise_scale < 0.0) throw ConfigError("noise_scale must be non-negative");

  const auto props = proportions(spec.dataset);
  const auto sizes = population_sizes(spec.dataset, spec.n_total);
  const bool ar_features = spec.dataset == "synthetic3";

  MultiPopulationData data;
  data.target_name = "y";
  data.feature_names.reserve(dim);
  for (std::size_t c = 0; c < dim; ++c) data.feature_names.push_back("x" + std::to_string(c));

  for (std::size_t p = 0; p < props.size(); ++p) {
    const std::string& id = props[p].first;
    PopulationDataset pop;
    pop.id = id;
    pop.x = Matrix(sizes[p], dim);
    pop.y.resize(sizes[p]);

    rng::Stream stream(rng::derive_key({seed, rng::hash_string(id), detail::kSynthStreamTag}));
    for (std::size_t r = 0; r < sizes[p]; ++r) {
      auto row = pop.x.row(r);
      if (ar_features) {
        // AR(1)-style chain along the feature index.
        row[0] = stream.next_gaussian();
        for (std::size_t c = 1; c < dim; ++c) {
          row[c] = 0.3 * row[c - 1] + 0.7 * stream.next_gaussian();
        }
      } else {
        for (std::size_t c = 0; c < dim; ++c) row[c] = stream.next_gaussian();
      }

      double noise = 0.0;
      if (spec.dataset == "synthetic2") {
        if (id == "A") {
          noise = 0.05 * stream.next_gaussian();
        } else if (id == "B") {
          // Heteroscedastic: scale depends on x3 and x4.
          noise = std::exp(0.5 * row[3] + 0.3 * row[4]) * stream.next_gaussian() * 0.1;
        } else if (id == "C") {
          noise = 0.1 * stream.next_gaussian();
        } else {
          noise = 0.2 * stream.next_student_t(3);
        }
      } else {
        noise = 0.1 * stream.next_gaussian();
      }
      pop.y[r] = true_mean(spec.dataset, id, row) + spec.noise_scale * noise;
    }
    data.populations.push_back(std::move(pop));
  }

  validate(data);
  return data;
}

}  // namespace drofs::synthetic
