#pragma once
// End-to-end orchestration: config, stage functions shared by the CLI, the
// k-sweep experiment and the selector/learner comparison.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hayama/boosted.hpp"
#include "hayama/dataset.hpp"
#include "hayama/lasso.hpp"
#include "hayama/metrics.hpp"
#include "hayama/scanner.hpp"
#include "hayama/yara.hpp"

namespace hayama::pipeline {

enum class Learner { Gbdt, Linear };
std::string_view to_string(Learner learner);
Learner learner_from_string(std::string_view name);

struct PipelineConfig {
  std::vector<std::filesystem::path> rules_dirs;
  std::filesystem::path manifest;
  std::filesystem::path side_features;    // optional
  std::filesystem::path baseline_scores;  // optional key,probability CSV standing in for f0
  std::filesystem::path workdir = "hayama-work";
  lasso::SelectionMode mode = lasso::SelectionMode::Conditional;
  std::vector<std::size_t> target_k{10, 50, 100};
  Learner learner = Learner::Gbdt;
  std::size_t chunk_size = scan::kDefaultChunkSize;
  std::size_t threads = 1;
  boost::TrainConfig gbdt;
  std::size_t baseline_folds = 5;
  bool penalize_baseline = false;
  double fpr_cap = 0.01;
  bool comparison = false;  // also emit the selector/learner comparison curve
  std::uint64_t seed = 1;

  /// Throws Error{Validation}.
  void validate() const;
};

/// Sets one key from its text form. Unknown keys and malformed values throw
/// Error{Validation}.
void apply_setting(PipelineConfig& config, std::string_view key, std::string_view value);
/// Flat `key = value` lines; `#` starts a comment. Relative paths resolve
/// against `base_dir`.
PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {},
                            PipelineConfig config = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig config = {});
/// Canonical key = value rendering, one line per key in a fixed order.
std::string config_to_text(const PipelineConfig& config);

// ---- artifacts -----------------------------------------------------------------------

/// Writes `content` unless the file already holds different bytes, which
/// requires `force` (Error{Validation} otherwise). Identical bytes are a no-op.
void write_artifact(const std::filesystem::path& path, std::string_view content, bool force);

/// sha256 of a file, or of a directory as the sorted (relative path, digest)
/// list of its regular files.
std::string content_digest(const std::filesystem::path& path);

/// {"command", "settings", "inputs": {name: sha256}} with sorted keys.
std::string provenance_json(std::string_view command, std::string_view settings,
                            const std::vector<std::pair<std::string, std::filesystem::path>>& inputs);

/// Exclusive workdir lock held for the object's lifetime (Error{Validation}
/// when another run holds it).
class WorkdirLock {
 public:
  explicit WorkdirLock(const std::filesystem::path& workdir);
  ~WorkdirLock();
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  std::filesystem::path path_;
};

// ---- stages --------------------------------------------------------------------------

/// Matrix, manifest and optional side table, aligned by key.
struct Corpus {
  data::CorpusManifest manifest;
  scan::OccurrenceMatrix matrix;
  std::optional<data::SideFeatureTable> side;
  std::optional<std::vector<double>> baseline_scores;  // manifest order
  data::AlignedDataset split;

  Corpus() = default;
  Corpus(const Corpus&) = delete;
  Corpus& operator=(const Corpus&) = delete;
  Corpus(Corpus&&) = delete;
};

/// Aligns matrix rows to the manifest. Throws Error{Validation} if no train
/// rows remain.
void bind_corpus(Corpus& corpus);

/// Leakage guard: throws Error{Integrity} unless every row is a train row.
void require_train_rows(const data::CorpusManifest& manifest, std::span<const std::size_t> rows);

/// f0 probabilities for `rows`: out-of-fold over `folds` seeded folds of a
/// GBDT on the side features. Rows must be train rows.
std::vector<double> out_of_fold_baseline(const Corpus& corpus, std::span<const std::size_t> rows,
                                         const boost::TrainConfig& config, std::size_t folds, std::uint64_t seed);

struct SelectionOutcome {
  lasso::SelectionMode mode = lasso::SelectionMode::Independent;  // effective mode
  lasso::LambdaPath path;
  std::vector<lasso::SelectedFeatureSet> sets;  // one per target k
  std::vector<std::string> diagnostics;

  std::string to_json() const;
};

/// Lasso selection on the train split in the configured mode.
SelectionOutcome select_features(const Corpus& corpus, const PipelineConfig& config);

/// Per-feature metric selection on the train split, as comparison baselines.
std::vector<std::uint32_t> select_by_metric(const Corpus& corpus, metrics::Metric metric, std::size_t k);

/// Design over `rows`: the chosen matrix columns, then side features when
/// `with_side`.
learn::DesignMatrix feature_design(const Corpus& corpus, std::span<const std::size_t> rows,
                                   std::span<const std::uint32_t> columns, bool with_side);

/// Trains on the train split and scores the test split.
metrics::EvalReport fit_and_evaluate(const Corpus& corpus, std::span<const std::uint32_t> columns, bool with_side,
                                     Learner learner, const PipelineConfig& config);

struct CurveRow {
  std::string series;
  std::size_t k = 0;
  std::size_t n_selected = 0;
  double accuracy = 0;
  double auc = 0;
  double partial_auc = 0;
};

std::string curve_to_csv(const std::vector<CurveRow>& rows);

struct ModeResult {
  SelectionOutcome selection;
  std::vector<CurveRow> rows;  // baseline (k = 0), combined:<learner>, yara_only:<learner>
};

/// Selection in config.mode, then per k the configured learner on side plus
/// selected sub-signatures and on the sub-signatures alone.
ModeResult run_mode(const Corpus& corpus, const PipelineConfig& config);

/// Independent-mode Lasso against per-feature metric selection, and GBDT
/// against the linear learner on the same selected columns (no side features).
std::vector<CurveRow> run_comparison(const Corpus& corpus, const PipelineConfig& config);

struct PipelineResult {
  ModeResult mode;
  std::vector<CurveRow> comparison;
  std::vector<std::filesystem::path> artifacts;
};

/// harvest -> scan -> select -> train/evaluate per k, writing every artifact
/// under config.workdir.
PipelineResult run_pipeline(const PipelineConfig& config, bool force);

}  // namespace hayama::pipeline
