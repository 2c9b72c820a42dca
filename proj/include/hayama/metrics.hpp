#pragma once
// Per-feature statistics, ROC and partial AUC, occurrence ECDFs,
// correlation matrices and the first-component PLS correlation.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hayama::scan {
struct OccurrenceMatrix;
}

namespace hayama::metrics {

// ---- per-feature statistics ("fires => predict malware") -------------------

struct FeatureStat {
  std::uint64_t fires_total = 0;
  std::uint64_t fires_malware = 0;
  std::uint64_t fires_benign = 0;
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  bool precision_undefined = false;  // never fires; precision recorded as 0
};

struct FeatureStats {
  std::size_t n = 0;
  std::size_t n_malware = 0;
  std::vector<FeatureStat> features;
  std::vector<std::string> ids;
};

/// Over `rows` (all rows when empty) of m, using m.labels. Throws
/// Error{Validation} when the matrix carries no labels.
FeatureStats per_feature_stats(const scan::OccurrenceMatrix& m, std::span<const std::size_t> rows = {});

enum class Metric : std::uint8_t { Accuracy, Precision, Recall };
std::string_view to_string(Metric metric);
Metric metric_from_string(std::string_view name);

/// Descending by metric, ties to the lower feature index.
std::vector<std::uint32_t> topk_by_metric(const FeatureStats& stats, Metric metric, std::size_t k);

/// Rows in `order` (all features by index when empty).
std::string stats_to_csv(const FeatureStats& stats, std::span<const std::uint32_t> order = {});

// ---- ROC ---------------------------------------------------------------------

struct RocPoint {
  double threshold = 0;  // predict positive iff score >= threshold
  double fpr = 0;
  double tpr = 0;
};

struct RocResult {
  std::vector<RocPoint> curve;  // (0,0) first, (1,1) last; tied scores form one step
  double auc = 0;
  double partial_auc = 0;       // normalized: area over FPR in [0, cap] divided by cap
  double fpr_cap = 0.01;
};

/// Throws Error{SingleClass}.
RocResult roc_and_partial_auc(std::span<const double> scores, std::span<const std::uint8_t> labels,
                              double fpr_cap = 0.01);
double normalized_partial_auc(const std::vector<RocPoint>& curve, double fpr_cap);
/// TPR of the curve at `fpr`, linearly interpolated.
double tpr_at(const std::vector<RocPoint>& curve, double fpr);

// ---- occurrence ECDF -------------------------------------------------------------

struct EcdfPoint {
  std::uint64_t count = 0;
  double proportion = 0;  // share of features firing in <= count files
};

/// Per-feature fire counts within rows of class `label`, restricted to
/// `columns` (all when empty).
std::vector<EcdfPoint> occurrence_ecdf(const scan::OccurrenceMatrix& m, std::uint8_t label,
                                       std::span<const std::size_t> rows = {},
                                       std::span<const std::uint32_t> columns = {});

// ---- correlation -------------------------------------------------------------------

struct CorrelationMatrix {
  std::size_t size = 0;
  std::vector<double> values;          // row-major size x size
  std::vector<std::uint8_t> constant;  // zero-variance columns (all their entries are 0)
  std::vector<std::string> names;

  double at(std::size_t i, std::size_t j) const { return values[i * size + j]; }
};

/// Pearson correlation over every pair of the concatenation [a, b].
CorrelationMatrix correlation_matrix(const std::vector<std::vector<double>>& columns_a,
                                     const std::vector<std::vector<double>>& columns_b,
                                     const std::vector<std::string>& names = {});
std::string correlation_to_csv(const CorrelationMatrix& c);

/// |corr| between the first PLS score pair of the two blocks (NIPALS,
/// weight change < 1e-10 or 500 iterations). Constant columns are dropped;
/// throws Error{Validation} if a block has no usable column or n < 2.
double pls_max_correlation(const std::vector<std::vector<double>>& yara_columns,
                           const std::vector<std::vector<double>>& side_columns);

// ---- model evaluation ----------------------------------------------------------------

struct Confusion {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct EvalReport {
  std::string split;
  std::size_t n = 0;
  double accuracy = 0;  // p >= 0.5 counts as malware
  double auc = 0;
  double partial_auc = 0;
  double fpr_cap = 0.01;
  Confusion confusion;
  std::vector<RocPoint> curve;

  std::string to_json() const;
  std::string curve_csv() const;
};

EvalReport evaluate_scores(std::string split, std::span<const double> probs, std::span<const std::uint8_t> labels,
                           double fpr_cap = 0.01);

}  // namespace hayama::metrics
