#include "drofs/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include "drofs/errors.hpp"
#include "drofs/detail/stream_tags.hpp"
#include "drofs/rng.hpp"
#include "drofs/text.hpp"

namespace drofs {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return fields;
}

double parse_cell(std::string_view cell, std::size_t line_no, const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || cell.empty()) {
    throw DataError("bad numeric cell at line " + std::to_string(line_no) +
                    ", column '" + column + "': '" + std::string(cell) + "'");
  }
  if (!std::isfinite(value)) {
    throw DataError("non-finite value at line " + std::to_string(line_no) +
                    ", column '" + column + "'");
  }
  return value;
}

GroupStats fit_group_stats(const std::vector<const PopulationDataset*>& members,
                           std::size_t m) {
  GroupStats stats;
  stats.feature_mean.assign(m, 0.0);
  stats.feature_std.assign(m, 0.0);
  stats.feature_constant.assign(m, 0);

  std::size_t n = 0;
  for (const auto* pop : members) n += pop->size();
  if (n == 0) throw DataError("standardize: empty group");
  const double inv_n = 1.0 / static_cast<double>(n);

  for (const auto* pop : members) {
    for (std::size_t r = 0; r < pop->size(); ++r) {
      const auto row = pop->x.row(r);
      for (std::size_t c = 0; c < m; ++c) stats.feature_mean[c] += row[c];
      stats.target_mean += pop->y[r];
    }
  }
  for (std::size_t c = 0; c < m; ++c) stats.feature_mean[c] *= inv_n;
  stats.target_mean *= inv_n;

  double target_var = 0.0;
  for (const auto* pop : members) {
    for (std::size_t r = 0; r < pop->size(); ++r) {
      const auto row = pop->x.row(r);
      for (std::size_t c = 0; c < m; ++c) {
        const double d = row[c] - stats.feature_mean[c];
        stats.feature_std[c] += d * d;
      }
      const double dy = pop->y[r] - stats.target_mean;
      target_var += dy * dy;
    }
  }
  for (std::size_t c = 0; c < m; ++c) {
    const double sd = std::sqrt(stats.feature_std[c] * inv_n);
    if (sd == 0.0) {
      stats.feature_std[c] = 1.0;
      stats.feature_constant[c] = 1;
    } else {
      stats.feature_std[c] = sd;
    }
  }
  const double target_sd = std::sqrt(target_var * inv_n);
  if (target_sd == 0.0) {
    stats.target_std = 1.0;
    stats.target_constant = true;
  } else {
    stats.target_std = target_sd;
  }
  return stats;
}

void apply_group_stats(PopulationDataset& pop, const GroupStats& stats) {
  const std::size_t m = pop.x.cols;
  for (std::size_t r = 0; r < pop.size(); ++r) {
    auto row = pop.x.row(r);
    for (std::size_t c = 0; c < m; ++c) {
      row[c] = (row[c] - stats.feature_mean[c]) / stats.feature_std[c];
    }
    pop.y[r] = (pop.y[r] - stats.target_mean) / stats.target_std;
  }
}

}  // namespace

std::size_t MultiPopulationData::total_rows() const {
  std::size_t n = 0;
  for (const auto& pop : populations) n += pop.size();
  return n;
}

const PopulationDataset* MultiPopulationData::find(const std::string& id) const {
  for (const auto& pop : populations) {
    if (pop.id == id) return &pop;
  }
  return nullptr;
}

void validate(const MultiPopulationData& data) {
  if (data.populations.empty()) throw DataError("dataset has no populations");
  if (data.feature_names.empty()) throw DataError("dataset has no features");
  const std::size_t m = data.feature_names.size();

  std::unordered_set<std::string> seen;
  for (const auto& pop : data.populations) {
    if (pop.id.empty()) throw DataError("population with empty id");
    if (!seen.insert(pop.id).second) {
      throw DataError("duplicate population id '" + pop.id + "'");
    }
    if (pop.size() == 0) throw DataError("population '" + pop.id + "' is empty");
    if (pop.x.cols != m) {
      throw DataError("population '" + pop.id + "' has " + std::to_string(pop.x.cols) +
                      " features, expected " + std::to_string(m));
    }
    if (pop.y.size() != pop.x.rows) {
      throw DataError("population '" + pop.id + "': target length " +
                      std::to_string(pop.y.size()) + " != row count " +
                      std::to_string(pop.x.rows));
    }
    for (double v : pop.x.values) {
      if (!std::isfinite(v)) throw DataError("population '" + pop.id + "': non-finite feature");
    }
    for (double v : pop.y) {
      if (!std::isfinite(v)) throw DataError("population '" + pop.id + "': non-finite target");
    }
  }
}

MultiPopulationData load_csv(const std::string& path, const std::string& population_column,
                             const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  const auto header = split_fields(line);

  std::size_t pop_col = header.size();
  std::size_t target_col = header.size();
  std::vector<std::string> feature_names;
  std::vector<std::size_t> feature_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == population_column) {
      if (pop_col != header.size()) throw DataError("duplicate population column");
      pop_col = i;
    } else if (header[i] == target_column) {
      if (target_col != header.size()) throw DataError("duplicate target column");
      target_col = i;
    } else {
      if (header[i].empty()) throw DataError("empty feature name in header");
      feature_names.emplace_back(header[i]);
      feature_cols.push_back(i);
    }
  }
  if (pop_col == header.size()) {
    throw DataError("'" + path + "': missing column '" + population_column + "'");
  }
  if (target_col == header.size()) {
    throw DataError("'" + path + "': missing column '" + target_column + "'");
  }
  if (feature_names.empty()) throw DataError("'" + path + "': no feature columns");

  MultiPopulationData data;
  data.feature_names = feature_names;
  data.target_name = target_column;

  // Rows collected per population, keyed by first appearance.
  std::unordered_map<std::string, std::size_t> pop_index;
  std::vector<std::vector<double>> pop_rows;   // flattened feature rows
  std::vector<std::vector<double>> pop_targets;
  std::vector<std::string> pop_order;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    std::string pop_id(fields[pop_col]);
    if (pop_id.empty()) {
      throw DataError("line " + std::to_string(line_no) + ": empty population id");
    }
    auto [it, inserted] = pop_index.try_emplace(pop_id, pop_order.size());
    if (inserted) {
      pop_order.push_back(pop_id);
      pop_rows.emplace_back();
      pop_targets.emplace_back();
    }
    const std::size_t p = it->second;
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      pop_rows[p].push_back(parse_cell(fields[feature_cols[j]], line_no, feature_names[j]));
    }
    pop_targets[p].push_back(parse_cell(fields[target_col], line_no, target_column));
  }

  const std::size_t m = feature_names.size();
  for (std::size_t p = 0; p < pop_order.size(); ++p) {
    PopulationDataset pop;
    pop.id = pop_order[p];
    pop.x.rows = pop_targets[p].size();
    pop.x.cols = m;
    pop.x.values = std::move(pop_rows[p]);
    pop.y = std::move(pop_targets[p]);
    data.populations.push_back(std::move(pop));
  }

  validate(data);
  return data;
}

void save_csv(const MultiPopulationData& data, const std::string& path,
              const std::string& population_column, const std::string& target_column) {
  validate(data);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");

  out << population_column;
  for (const auto& name : data.feature_names) out << ',' << name;
  out << ',' << target_column << '\n';

  for (const auto& pop : data.populations) {
    for (std::size_t r = 0; r < pop.size(); ++r) {
      out << pop.id;
      const auto row = pop.x.row(r);
      for (double v : row) out << ',' << format_double(v);
      out << ',' << format_double(pop.y[r]) << '\n';
    }
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

StandardizedData standardize(const MultiPopulationData& data, StandardizeScope scope) {
  validate(data);
  StandardizedData result;
  result.data = data;
  result.params.scope = scope;

  if (scope == StandardizeScope::pooled) {
    std::vector<const PopulationDataset*> members;
    for (const auto& pop : data.populations) members.push_back(&pop);
    GroupStats stats = fit_group_stats(members, data.num_features());
    for (auto& pop : result.data.populations) apply_group_stats(pop, stats);
    result.params.groups.push_back(std::move(stats));
  } else {
    for (std::size_t p = 0; p < data.populations.size(); ++p) {
      GroupStats stats =
          fit_group_stats({&data.populations[p]}, data.num_features());
      stats.population_id = data.populations[p].id;
      apply_group_stats(result.data.populations[p], stats);
      result.params.groups.push_back(std::move(stats));
    }
  }
  return result;
}

namespace {

const GroupStats& stats_for(const StandardizationParams& params, const std::string& id) {
  if (params.scope == StandardizeScope::pooled) {
    if (params.groups.size() != 1) throw DataError("pooled params must have one group");
    return params.groups.front();
  }
  for (const auto& g : params.groups) {
    if (g.population_id == id) return g;
  }
  throw DataError("no standardization group for population '" + id + "'");
}

}  // namespace

MultiPopulationData apply_standardization(const MultiPopulationData& data,
                                          const StandardizationParams& params) {
  validate(data);
  MultiPopulationData out = data;
  for (auto& pop : out.populations) {
    const GroupStats& stats = stats_for(params, pop.id);
    if (stats.feature_mean.size() != pop.x.cols) {
      throw DataError("standardization params fitted on different feature count");
    }
    apply_group_stats(pop, stats);
  }
  return out;
}

double destandardize_target(double value, const StandardizationParams& params,
                            const std::string& population_id) {
  const GroupStats& stats = stats_for(params, population_id);
  return value * stats.target_std + stats.target_mean;
}

SplitBundle split_dataset(const MultiPopulationData& data, std::uint64_t seed) {
  validate(data);
  SplitBundle bundle;
  for (auto* part : {&bundle.fs, &bundle.train, &bundle.test}) {
    part->feature_names = data.feature_names;
    part->target_name = data.target_name;
  }

  for (const auto& pop : data.populations) {
    // Integer arithmetic: floor(0.6 n) and floor(0.8 rest) computed exactly.
    const std::size_t n = pop.size();
    const std::size_t n_fs = (6 * n) / 10;
    const std::size_t rest = n - n_fs;
    const std::size_t n_train = (8 * rest) / 10;
    const std::size_t n_test = rest - n_train;
    if (n_fs == 0 || n_train == 0 || n_test == 0) {
      throw DataError("population '" + pop.id + "' too small to split (" +
                      std::to_string(n) + " rows)");
    }

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng::Stream stream(
        rng::derive_key({seed, rng::hash_string(pop.id), detail::kSplitStreamTag}));
    rng::shuffle(perm, stream);

    const auto make_part = [&](std::size_t offset, std::size_t count) {
      PopulationDataset part;
      part.id = pop.id;
      std::vector<std::size_t> ids(perm.begin() + offset, perm.begin() + offset + count);
      part.x = select_rows(pop.x, ids);
      part.y.reserve(count);
      for (std::size_t r : ids) part.y.push_back(pop.y[r]);
      return part;
    };

    bundle.fs.populations.push_back(make_part(0, n_fs));
    bundle.train.populations.push_back(make_part(n_fs, n_train));
    bundle.test.populations.push_back(make_part(n_fs + n_train, n_test));
  }
  return bundle;
}

}  // namespace drofs
