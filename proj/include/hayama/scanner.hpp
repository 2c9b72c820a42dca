#pragma once
// Multi-pattern occurrence scanning: compiles a signature catalog into a
// failure-link automaton and turns a corpus into a sparse binary matrix.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hayama/dataset.hpp"
#include "hayama/util.hpp"
#include "hayama/yara.hpp"

namespace hayama::scan {

inline constexpr std::size_t kDefaultChunkSize = 4u << 20;

class PatternAutomaton {
 public:
  /// Throws Error{Compile} for an empty catalog, a masked entry without a
  /// fixed byte, or a masked entry carrying nocase/wide.
  static PatternAutomaton compile(const yara::SignatureCatalog& catalog);

  /// Sorted, unique feature indices whose sub-signature occurs in data.
  std::vector<std::uint32_t> scan_bytes(std::span<const std::uint8_t> data) const;

  /// Streams the file in windows of chunk_size + window_overlap() bytes.
  std::vector<std::uint32_t> scan_file(const std::filesystem::path& path,
                                       std::size_t chunk_size = kDefaultChunkSize,
                                       std::uint64_t* bytes_read = nullptr) const;

  std::size_t feature_count() const { return col_ids_.size(); }
  std::size_t pattern_count() const { return hits_.size(); }
  std::size_t max_pattern_len() const { return max_len_; }
  /// Bytes shared by consecutive windows: max_pattern_len - 1, plus one byte
  /// of context on each side when any entry is fullword.
  std::size_t window_overlap() const;
  const std::vector<std::string>& col_ids() const { return col_ids_; }

 private:
  struct Trie {
    bool folded = false;
    std::vector<std::uint32_t> root_next;     // 256 entries
    std::vector<std::uint32_t> child_begin;   // per node, into child_bytes/child_node
    std::vector<std::uint8_t> child_bytes;
    std::vector<std::uint32_t> child_node;
    std::vector<std::uint32_t> fail;
    std::vector<std::uint32_t> dict;          // nearest suffix with output, kNone if none
    std::vector<std::uint32_t> out_begin;     // per node, into out_hits
    std::vector<std::uint32_t> out_hits;

    bool empty() const { return fail.size() <= 1; }
    std::uint32_t step(std::uint32_t state, std::uint8_t c) const;
  };

  struct Hit {
    std::uint32_t feature;
    std::uint32_t length;
    std::uint32_t verifier;  // kNone unless masked
    bool fullword;
  };

  struct Verifier {
    std::uint32_t anchor_offset;
    Bytes pattern;
    Bytes mask;
  };

  struct Window {
    std::span<const std::uint8_t> data;
    bool at_file_start;
    bool at_file_end;
  };

  static Trie build_trie(const std::vector<std::pair<Bytes, std::uint32_t>>& patterns, bool folded);
  void scan_window(const Window& w, std::vector<std::uint8_t>& marks) const;
  bool accept(const Hit& hit, const Window& w, std::size_t end) const;

  Trie exact_;
  Trie folded_;
  std::vector<Hit> hits_;
  std::vector<Verifier> verifiers_;
  std::vector<std::string> col_ids_;
  std::size_t max_len_ = 0;
  bool any_fullword_ = false;
};

struct OccurrenceMatrix {
  std::uint64_t n_rows = 0;
  std::uint64_t n_cols = 0;
  std::vector<std::uint64_t> offsets{0};
  std::vector<std::uint32_t> cols;
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  std::optional<std::vector<std::uint8_t>> labels;

  std::size_t nnz() const { return cols.size(); }
  std::span<const std::uint32_t> row(std::size_t i) const {
    return {cols.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
  bool get(std::size_t r, std::uint32_t c) const;
  void append_row(std::span<const std::uint32_t> sorted_cols);
  /// Checks the CSR invariants; throws Error{Integrity}.
  void validate() const;

  friend bool operator==(const OccurrenceMatrix&, const OccurrenceMatrix&) = default;
};

Bytes encode_matrix(const OccurrenceMatrix& m);
/// Decodes the binary part only; row_ids/col_ids come from the sidecar.
OccurrenceMatrix decode_matrix(std::span<const std::uint8_t> bytes);
std::string encode_sidecar(const OccurrenceMatrix& m, const std::string& provenance_json = "");
void apply_sidecar(OccurrenceMatrix& m, std::string_view sidecar_json);

std::filesystem::path sidecar_path(const std::filesystem::path& matrix_path);
void save_matrix(const OccurrenceMatrix& m, const std::filesystem::path& path,
                 const std::string& provenance_json = "");
OccurrenceMatrix load_matrix(const std::filesystem::path& path);

struct RowReport {
  std::size_t row = 0;
  std::string path;
  std::uint64_t bytes = 0;
  double millis = 0;
  std::size_t fired = 0;
  std::optional<std::string> error;
};

struct ScanReport {
  std::size_t chunk_size = kDefaultChunkSize;
  std::size_t overlap = 0;
  std::size_t patterns = 0;
  std::vector<RowReport> rows;

  bool partial_failure() const;
  /// JSON-Lines: a header describing matching semantics, then one line per row.
  std::string to_jsonl() const;
};

struct ScanOptions {
  std::size_t chunk_size = kDefaultChunkSize;
  std::size_t threads = 1;
};

/// Missing files are reported together before any scanning starts
/// (Error{Io}). Files that fail mid-scan become all-zero rows flagged in the
/// report.
OccurrenceMatrix scan_corpus(const PatternAutomaton& automaton, const data::CorpusManifest& manifest,
                             const ScanOptions& options = {}, ScanReport* report = nullptr);

}  // namespace hayama::scan
