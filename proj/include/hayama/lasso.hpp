#pragma once
// L1-regularized logistic regression over sub-signature columns, with three
// ways of bringing side information into the fit, and top-k extraction.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hayama/design.hpp"

namespace hayama::lasso {

enum class SelectionMode : std::uint8_t { Independent, Conditional, Stacked };

std::string_view to_string(SelectionMode mode);
SelectionMode mode_from_string(std::string_view name);  // throws Error{Validation}

enum class ColumnRole : std::uint8_t { Free, Penalized, Frozen };

struct Objective {
  double value = 0;   // smooth + lambda * L1
  double smooth = 0;  // mean cross-entropy (+ ridge term)
  std::vector<double> gradient;  // smooth part, per column
  double intercept_gradient = 0;
};

/// Mean binary cross-entropy of sigmoid(intercept + x.w), probabilities
/// clamped to [1e-12, 1 - 1e-12], plus lambda * sum of |w_j| over penalized
/// columns. `ridge` adds ridge/2 * |w|^2 to the smooth part.
Objective logistic_objective(std::span<const double> weights, double intercept, const learn::DesignMatrix& x,
                             std::span<const std::uint8_t> labels, double lambda,
                             std::span<const std::uint8_t> penalized, double ridge = 0.0);

struct SolverOptions {
  int max_iter = 5000;
  double rel_tol = 1e-8;
  double kkt_tol = 1e-6;  // checked once the relative change drops below rel_tol
  double ridge = 0.0;
};

struct SolverResult {
  std::vector<double> weights;
  double intercept = 0;
  std::vector<double> trace;  // objective after each accepted step
  int iterations = 0;
  bool converged = false;
  double kkt = 0;  // largest optimality violation at the returned point
};

/// Accelerated proximal gradient with backtracking and function-value
/// restart. Frozen columns stay at zero; the intercept is never penalized.
SolverResult solve_logistic(const learn::DesignMatrix& x, std::span<const std::uint8_t> labels, double lambda,
                            std::span<const ColumnRole> roles, const SolverOptions& options,
                            std::span<const double> init_weights = {}, double init_intercept = 0.0);

/// Largest violation of the L1 optimality conditions at (w, b).
double kkt_violation(std::span<const double> weights, double intercept, const learn::DesignMatrix& x,
                     std::span<const std::uint8_t> labels, double lambda, std::span<const ColumnRole> roles,
                     double ridge = 0.0);

struct PreparedDesign {
  SelectionMode mode = SelectionMode::Independent;
  learn::DesignMatrix x;                      // dense block already standardized
  std::vector<ColumnRole> roles;              // per column
  std::vector<learn::ColumnScaling> scaling;  // per dense column (training statistics)
  std::vector<std::string> diagnostics;

  std::vector<std::uint8_t> penalized_mask() const;
};

PreparedDesign prepare_independent(learn::DesignMatrix binary);
/// Appends the standardized baseline probability as one dense column,
/// unpenalized unless `penalize_f0`. A constant column is dropped and the
/// mode falls back to independent.
PreparedDesign prepare_conditional(learn::DesignMatrix binary, std::span<const double> f0_probs,
                                   bool penalize_f0 = false);
/// Appends standardized side columns; every column is penalized. Constant
/// side columns are dropped.
PreparedDesign prepare_stacked(learn::DesignMatrix binary, const learn::DesignMatrix& side);

struct SelectionModel {
  SelectionMode mode = SelectionMode::Independent;
  double lambda = 0;
  double intercept = 0;
  std::vector<std::pair<std::uint32_t, double>> weights;  // non-zero only, ascending column
  std::vector<std::uint8_t> penalized_mask;
  std::vector<learn::ColumnScaling> column_scaling;
  std::vector<double> objective_trace;
  std::size_t n_binary = 0;
  std::vector<std::string> column_names;
  int iterations = 0;
  bool converged = true;

  std::size_t width() const { return column_names.size(); }
  std::vector<double> dense_weights() const;
  std::size_t binary_nonzeros() const;
};

/// Intercept and free columns fitted with every penalized column held at 0.
SelectionModel null_model(const PreparedDesign& design, std::span<const std::uint8_t> labels,
                          const SolverOptions& options = {});
/// max_j |gradient_j| over penalized columns at the null model.
double lambda_max(const PreparedDesign& design, std::span<const std::uint8_t> labels,
                  const SelectionModel& null);

/// Throws Error{SingleClass} unless both labels occur. Starts from `warm`
/// when given, otherwise from the null model. lambda >= lambda_max returns
/// the null model itself.
SelectionModel fit_lasso(const PreparedDesign& design, std::span<const std::uint8_t> labels, double lambda,
                         const SolverOptions& options = {}, const SelectionModel* warm = nullptr);

struct LambdaPath {
  std::vector<double> lambdas;          // descending geometric grid
  std::vector<std::size_t> nonzeros;    // binary non-zeros per grid point
  std::vector<SelectionModel> models;   // one per grid point
  std::vector<std::size_t> picks;       // grid index chosen per target count
};

/// Warm-started fits over `grid_size` values from lambda_max down to
/// lambda_max * floor_ratio. For each target, the grid model whose binary
/// non-zero count is closest (ties go to the larger lambda).
LambdaPath lambda_path(const PreparedDesign& design, std::span<const std::uint8_t> labels,
                       std::span<const std::size_t> target_counts, const SolverOptions& options = {},
                       std::size_t grid_size = 40, double floor_ratio = 1e-4);

struct SelectedFeatureSet {
  std::size_t k = 0;
  std::vector<std::uint32_t> columns;      // binary column indices, by |w| descending
  std::vector<std::string> feature_ids;
  double lambda_used = 0;
  bool short_count = false;                // fewer non-zeros than k
};

/// Binary columns only, |w| descending, ties to the smaller column index.
SelectedFeatureSet select_top_k(const SelectionModel& model, std::size_t k);

std::string model_to_json(const SelectionModel& model, const SelectedFeatureSet* selected = nullptr);
SelectionModel model_from_json(std::string_view text);

}  // namespace hayama::lasso
