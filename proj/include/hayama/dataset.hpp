#pragma once
// Labeled corpus manifest, dense side features and train/test views.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hayama {

namespace scan {
struct OccurrenceMatrix;
}

namespace data {

enum class Split : std::uint8_t { Train, Test, Valid };

std::string_view to_string(Split split);

struct SampleRecord {
  std::string key;
  std::filesystem::path path;
  std::uint8_t label = 0;  // 1 = malware
  Split split = Split::Train;
};

struct CorpusManifest {
  std::vector<SampleRecord> records;

  std::size_t size() const { return records.size(); }
  std::vector<std::string> keys() const;
  std::vector<std::uint8_t> labels() const;
};

/// CSV (`key,path,label,split`) or JSON-Lines with the same fields. Relative
/// paths are resolved against the manifest's directory.
CorpusManifest load_manifest(const std::filesystem::path& path);
CorpusManifest parse_manifest(std::string_view text, bool json_lines,
                              const std::filesystem::path& base_dir = {});
void validate_manifest(const CorpusManifest& manifest);
std::string manifest_to_csv(const CorpusManifest& manifest, const std::filesystem::path& base_dir = {});

struct SideFeatureTable {
  std::vector<std::string> keys;
  std::vector<std::string> feature_names;
  std::size_t dim = 0;
  std::vector<double> values;  // row-major keys.size() x dim
  std::size_t imputed = 0;     // NaN/inf cells replaced by 0

  std::size_t rows() const { return keys.size(); }
  double at(std::size_t row, std::size_t col) const { return values[row * dim + col]; }
};

/// Loads a side-feature CSV/JSON-Lines and reorders it to manifest order.
SideFeatureTable load_side_features(const std::filesystem::path& path, const CorpusManifest& manifest);
SideFeatureTable parse_side_features(std::string_view text, bool json_lines, const CorpusManifest& manifest);
std::string side_features_to_csv(const SideFeatureTable& table);

/// Rows of a matrix (and optional side table) belonging to one split. Holds
/// pointers into the originals; the sparse payload is not copied.
struct LabeledView {
  const scan::OccurrenceMatrix* matrix = nullptr;
  const SideFeatureTable* side = nullptr;
  std::vector<std::size_t> rows;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return rows.size(); }
  bool has_side() const { return side != nullptr; }
};

struct AlignedDataset {
  LabeledView train;
  LabeledView test;
  LabeledView valid;
};

/// Requires matrix.row_ids to equal the manifest keys in order.
AlignedDataset align(const scan::OccurrenceMatrix& matrix, const CorpusManifest& manifest,
                     const SideFeatureTable* side = nullptr);

}  // namespace data
}  // namespace hayama
