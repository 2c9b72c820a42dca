#pragma once
// Second-order gradient-boosted trees with logistic loss, and the
// unpenalized logistic model used as the linear comparison learner.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hayama/design.hpp"

namespace hayama::boost {

struct TrainConfig {
  int n_trees = 200;
  int max_depth = 6;
  double learning_rate = 0.1;
  double min_child_hessian = 1.0;
  double l2_leaf = 1.0;
  int n_bins = 256;
  double min_split_gain = 0.0;  // a split is taken when gain >= this
  double row_subsample = 1.0;
  double col_subsample = 1.0;
  std::uint64_t seed = 0;

  /// Throws Error{Validation}.
  void validate() const;
};

struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0;  // value < threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double leaf_value = 0;

  bool is_leaf() const { return left < 0; }
};

using Tree = std::vector<TreeNode>;

struct BoostedEnsemble {
  std::vector<Tree> trees;
  double learning_rate = 0.1;
  double base_margin = 0;
  TrainConfig config;
  std::vector<double> feature_gain;       // per column, summed over splits
  std::vector<std::uint32_t> split_count; // per column
  std::vector<double> train_logloss;      // after each round
  std::size_t n_binary = 0;
  std::size_t n_dense = 0;
  std::vector<std::string> feature_names;

  double margin(const learn::DesignMatrix& x, std::size_t row) const;
};

/// Cut points for one dense column: midpoints between adjacent distinct
/// values when they fit in n_bins, otherwise quantile boundaries.
std::vector<double> quantile_cuts(std::vector<double> values, int n_bins);

/// Throws Error{SingleClass} or Error{Validation} (non-finite values).
BoostedEnsemble fit_gbdt(const learn::DesignMatrix& x, std::span<const std::uint8_t> labels,
                         const TrainConfig& config = {});

/// Throws Error{Shape} when x's blocks do not match the training layout.
std::vector<double> predict_proba(const BoostedEnsemble& model, const learn::DesignMatrix& x);

/// Columns used by at least one split, by accumulated gain descending, ties
/// to the smaller index.
std::vector<std::pair<std::size_t, double>> gain_importance(const BoostedEnsemble& model);

/// Mean cross-entropy with probabilities clamped to [1e-12, 1 - 1e-12].
double log_loss(std::span<const double> probs, std::span<const std::uint8_t> labels);

std::string ensemble_to_json(const BoostedEnsemble& model);
BoostedEnsemble ensemble_from_json(std::string_view text);

struct LinearModel {
  std::vector<double> weights;  // per column, on the standardized scale
  double intercept = 0;
  std::vector<learn::ColumnScaling> scaling;  // per dense column
  std::size_t n_binary = 0;
  std::size_t n_dense = 0;
  std::vector<std::string> feature_names;
  int iterations = 0;
  bool converged = false;
};

/// Logistic regression without L1 (ridge 1e-8). Dense columns are
/// standardized with training statistics; constant columns keep weight 0.
LinearModel fit_linear_unpenalized(const learn::DesignMatrix& x, std::span<const std::uint8_t> labels);
std::vector<double> predict_proba(const LinearModel& model, const learn::DesignMatrix& x);

std::string linear_to_json(const LinearModel& model);
LinearModel linear_from_json(std::string_view text);

}  // namespace hayama::boost
