#pragma once
// Learner input: a sparse block of 0/1 sub-signature columns followed by a
// dense block of real-valued columns, both over the same rows.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hayama/dataset.hpp"

namespace hayama::scan {
struct OccurrenceMatrix;
}

namespace hayama::learn {

struct ColumnScaling {
  double mean = 0.0;
  double scale = 1.0;  // standard deviation; 0 marks a constant column
};

struct DesignMatrix {
  std::size_t n_rows = 0;
  std::size_t n_binary = 0;
  std::size_t n_dense = 0;
  std::vector<std::uint64_t> offsets{0};  // binary CSR, n_rows + 1
  std::vector<std::uint32_t> cols;
  std::vector<double> dense;              // row-major n_rows x n_dense
  std::vector<std::string> names;         // n_binary + n_dense

  std::size_t width() const { return n_binary + n_dense; }
  std::span<const std::uint32_t> binary_row(std::size_t r) const {
    return {cols.data() + offsets[r], static_cast<std::size_t>(offsets[r + 1] - offsets[r])};
  }
  const double* dense_row(std::size_t r) const { return dense.data() + r * n_dense; }
  double value(std::size_t r, std::size_t c) const;
  std::vector<double> column(std::size_t c) const;

  /// out[i] = bias + sum_j x_ij w_j
  void multiply(std::span<const double> w, double bias, std::span<double> out) const;
  /// out[j] = sum_i x_ij r_i (out is overwritten)
  void multiply_transpose(std::span<const double> r, std::span<double> out) const;

  /// Throws Error{Shape} on inconsistent sizes.
  void validate() const;
};

/// Rows `rows` of `m`, restricted to `columns` (all columns when empty) and
/// renumbered in the order given.
DesignMatrix binary_design(const scan::OccurrenceMatrix& m, std::span<const std::size_t> rows,
                           std::span<const std::uint32_t> columns = {});

/// Side-feature rows `rows` as a dense-only design.
DesignMatrix side_design(const data::SideFeatureTable& side, std::span<const std::size_t> rows);

/// Appends b's dense block to a. Row counts must agree; a keeps its binary block.
DesignMatrix with_dense(DesignMatrix a, const std::vector<double>& values, std::size_t n_cols,
                        const std::vector<std::string>& names);

/// Column-wise concatenation [a | b]: binary blocks merge first, then dense blocks.
DesignMatrix hconcat(const DesignMatrix& a, const DesignMatrix& b);

std::vector<ColumnScaling> fit_scaling(const DesignMatrix& x);
/// Standardizes dense columns in place; constant columns become 0.
void apply_scaling(DesignMatrix& x, const std::vector<ColumnScaling>& scaling);

}  // namespace hayama::learn
