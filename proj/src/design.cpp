#include "hayama/design.hpp"

#include <algorithm>
#include <cmath>

#include "hayama/error.hpp"
#include "hayama/scanner.hpp"

namespace hayama::learn {

double DesignMatrix::value(std::size_t r, std::size_t c) const {
  if (c >= n_binary) return dense[r * n_dense + (c - n_binary)];
  auto row = binary_row(r);
  return std::binary_search(row.begin(), row.end(), static_cast<std::uint32_t>(c)) ? 1.0 : 0.0;
}

std::vector<double> DesignMatrix::column(std::size_t c) const {
  std::vector<double> out(n_rows);
  for (std::size_t r = 0; r < n_rows; ++r) out[r] = value(r, c);
  return out;
}

void DesignMatrix::multiply(std::span<const double> w, double bias, std::span<double> out) const {
  for (std::size_t r = 0; r < n_rows; ++r) {
    double s = bias;
    for (auto c : binary_row(r)) s += w[c];
    const double* d = dense_row(r);
    for (std::size_t k = 0; k < n_dense; ++k) s += d[k] * w[n_binary + k];
    out[r] = s;
  }
}

void DesignMatrix::multiply_transpose(std::span<const double> r, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < n_rows; ++i) {
    const double ri = r[i];
    for (auto c : binary_row(i)) out[c] += ri;
    const double* d = dense_row(i);
    for (std::size_t k = 0; k < n_dense; ++k) out[n_binary + k] += d[k] * ri;
  }
}

void DesignMatrix::validate() const {
  if (offsets.size() != n_rows + 1 || offsets.back() != cols.size() || dense.size() != n_rows * n_dense ||
      names.size() != width())
    throw Error(ErrorCode::Shape, "design matrix: inconsistent block sizes");
  for (std::size_t r = 0; r < n_rows; ++r) {
    auto row = binary_row(r);
    for (std::size_t i = 0; i < row.size(); ++i)
      if (row[i] >= n_binary || (i && row[i] <= row[i - 1]))
        throw Error(ErrorCode::Shape, "design matrix: row " + std::to_string(r) + " has unsorted or out-of-range columns");
  }
}

DesignMatrix binary_design(const scan::OccurrenceMatrix& m, std::span<const std::size_t> rows,
                           std::span<const std::uint32_t> columns) {
  DesignMatrix x;
  x.n_rows = rows.size();
  std::vector<std::int64_t> remap;
  if (columns.empty()) {
    x.n_binary = m.n_cols;
    x.names = m.col_ids;
    if (x.names.size() != x.n_binary) x.names.resize(x.n_binary);
  } else {
    remap.assign(m.n_cols, -1);
    for (std::size_t k = 0; k < columns.size(); ++k) {
      if (columns[k] >= m.n_cols) throw Error(ErrorCode::Shape, "binary_design: column index out of range");
      remap[columns[k]] = static_cast<std::int64_t>(k);
      x.names.push_back(columns[k] < m.col_ids.size() ? m.col_ids[columns[k]] : std::string());
    }
    x.n_binary = columns.size();
  }
  x.offsets.reserve(rows.size() + 1);
  std::vector<std::uint32_t> buf;
  for (auto r : rows) {
    if (r >= m.n_rows) throw Error(ErrorCode::Shape, "binary_design: row index out of range");
    auto row = m.row(r);
    if (remap.empty()) {
      x.cols.insert(x.cols.end(), row.begin(), row.end());
    } else {
      buf.clear();
      for (auto c : row)
        if (remap[c] >= 0) buf.push_back(static_cast<std::uint32_t>(remap[c]));
      std::sort(buf.begin(), buf.end());
      x.cols.insert(x.cols.end(), buf.begin(), buf.end());
    }
    x.offsets.push_back(x.cols.size());
  }
  return x;
}

DesignMatrix side_design(const data::SideFeatureTable& side, std::span<const std::size_t> rows) {
  DesignMatrix x;
  x.n_rows = rows.size();
  x.n_dense = side.dim;
  x.names = side.feature_names;
  x.offsets.assign(rows.size() + 1, 0);
  x.dense.reserve(rows.size() * side.dim);
  for (auto r : rows) {
    if (r >= side.rows()) throw Error(ErrorCode::Shape, "side_design: row index out of range");
    x.dense.insert(x.dense.end(), side.values.begin() + r * side.dim, side.values.begin() + (r + 1) * side.dim);
  }
  return x;
}

DesignMatrix with_dense(DesignMatrix a, const std::vector<double>& values, std::size_t n_cols,
                        const std::vector<std::string>& names) {
  if (values.size() != a.n_rows * n_cols || names.size() != n_cols)
    throw Error(ErrorCode::Shape, "with_dense: expected " + std::to_string(a.n_rows) + " x " +
                                      std::to_string(n_cols) + " values");
  std::vector<double> merged;
  merged.reserve(a.n_rows * (a.n_dense + n_cols));
  for (std::size_t r = 0; r < a.n_rows; ++r) {
    merged.insert(merged.end(), a.dense.begin() + r * a.n_dense, a.dense.begin() + (r + 1) * a.n_dense);
    merged.insert(merged.end(), values.begin() + r * n_cols, values.begin() + (r + 1) * n_cols);
  }
  a.dense = std::move(merged);
  a.n_dense += n_cols;
  a.names.insert(a.names.end(), names.begin(), names.end());
  return a;
}

DesignMatrix hconcat(const DesignMatrix& a, const DesignMatrix& b) {
  if (a.n_rows != b.n_rows) throw Error(ErrorCode::Shape, "hconcat: row counts differ");
  DesignMatrix x;
  x.n_rows = a.n_rows;
  x.n_binary = a.n_binary + b.n_binary;
  x.n_dense = a.n_dense + b.n_dense;
  x.names.assign(a.names.begin(), a.names.begin() + a.n_binary);
  x.names.insert(x.names.end(), b.names.begin(), b.names.begin() + b.n_binary);
  x.names.insert(x.names.end(), a.names.begin() + a.n_binary, a.names.end());
  x.names.insert(x.names.end(), b.names.begin() + b.n_binary, b.names.end());
  x.cols.reserve(a.cols.size() + b.cols.size());
  x.dense.reserve(x.n_rows * x.n_dense);
  for (std::size_t r = 0; r < x.n_rows; ++r) {
    for (auto c : a.binary_row(r)) x.cols.push_back(c);
    for (auto c : b.binary_row(r)) x.cols.push_back(static_cast<std::uint32_t>(c + a.n_binary));
    x.offsets.push_back(x.cols.size());
    x.dense.insert(x.dense.end(), a.dense_row(r), a.dense_row(r) + a.n_dense);
    x.dense.insert(x.dense.end(), b.dense_row(r), b.dense_row(r) + b.n_dense);
  }
  return x;
}

std::vector<ColumnScaling> fit_scaling(const DesignMatrix& x) {
  std::vector<ColumnScaling> out(x.n_dense);
  if (x.n_rows == 0) return out;
  const double n = static_cast<double>(x.n_rows);
  for (std::size_t k = 0; k < x.n_dense; ++k) {
    double mean = 0;
    for (std::size_t r = 0; r < x.n_rows; ++r) mean += x.dense[r * x.n_dense + k];
    mean /= n;
    double ss = 0;
    for (std::size_t r = 0; r < x.n_rows; ++r) {
      double d = x.dense[r * x.n_dense + k] - mean;
      ss += d * d;
    }
    double sd = std::sqrt(ss / n);
    out[k] = {mean, sd > 1e-12 * (1.0 + std::abs(mean)) ? sd : 0.0};
  }
  return out;
}

void apply_scaling(DesignMatrix& x, const std::vector<ColumnScaling>& scaling) {
  if (scaling.size() != x.n_dense) throw Error(ErrorCode::Shape, "apply_scaling: scaling/column count mismatch");
  for (std::size_t r = 0; r < x.n_rows; ++r)
    for (std::size_t k = 0; k < x.n_dense; ++k) {
      double& v = x.dense[r * x.n_dense + k];
      v = scaling[k].scale > 0 ? (v - scaling[k].mean) / scaling[k].scale : 0.0;
    }
}

}  // namespace hayama::learn
