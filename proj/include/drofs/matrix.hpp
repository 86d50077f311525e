#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "drofs/errors.hpp"

namespace drofs {

// Dense row-major matrix. Rows are observations, columns are features, so the
// hot loops in the objective stream one contiguous row at a time.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }

  bool empty() const { return rows == 0 || cols == 0; }
};

// Copy of the given columns, in the given order. Used to carve selected
// feature subsets out of a design matrix.
inline Matrix select_columns(const Matrix& x, std::span<const std::size_t> columns) {
  for (std::size_t c : columns) {
    if (c >= x.cols) throw DataError("select_columns: column index out of range");
  }
  Matrix out(x.rows, columns.size());
  for (std::size_t r = 0; r < x.rows; ++r) {
    const auto src = x.row(r);
    auto dst = out.row(r);
    for (std::size_t j = 0; j < columns.size(); ++j) dst[j] = src[columns[j]];
  }
  return out;
}

// Copy of the given rows, in the given order.
inline Matrix select_rows(const Matrix& x, std::span<const std::size_t> row_ids) {
  for (std::size_t r : row_ids) {
    if (r >= x.rows) throw DataError("select_rows: row index out of range");
  }
  Matrix out(row_ids.size(), x.cols);
  for (std::size_t i = 0; i < row_ids.size(); ++i) {
    const auto src = x.row(row_ids[i]);
    auto dst = out.row(i);
    for (std::size_t c = 0; c < x.cols; ++c) dst[c] = src[c];
  }
  return out;
}

}  // namespace drofs
