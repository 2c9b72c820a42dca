#pragma once
// YARA rule harvesting: split rules into their individual string definitions
// (sub-signatures) and collect them into a deduplicated catalog. Conditions are
// captured for provenance but never interpreted.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hayama/util.hpp"

namespace hayama::yara {

struct RawRule {
  std::string source_path;
  std::string rule_name;
  /// (identifier, right-hand side verbatim incl. modifiers)
  std::vector<std::pair<std::string, std::string>> strings_block;
  std::string condition_text;
};

struct Diagnostic {
  std::string source_path;
  std::size_t line = 0;
  std::string message;
};

struct ParseResult {
  std::vector<RawRule> rules;
  std::vector<Diagnostic> diagnostics;
};

/// Parses one rule file. Malformed rules are skipped with a diagnostic; the
/// rest of the file is still parsed.
ParseResult parse_rule_file(const std::string& path, std::string_view bytes);

enum class StringKind : std::uint8_t { Text = 0, HexFixed = 1, HexWild = 2, Regex = 3 };

std::string_view to_string(StringKind kind);
std::optional<StringKind> kind_from_string(std::string_view s);

enum Modifier : std::uint8_t {
  kNoCase = 1u << 0,
  kWide = 1u << 1,
  kAscii = 1u << 2,
  kFullword = 1u << 3,
};

/// Bitmask of Modifier values.
struct ModifierSet {
  std::uint8_t bits = 0;

  bool has(Modifier m) const { return (bits & m) != 0; }
  void add(Modifier m) { bits = static_cast<std::uint8_t>(bits | m); }
  friend bool operator==(ModifierSet, ModifierSet) = default;
};

std::vector<std::string> modifier_names(ModifierSet set);
std::optional<Modifier> modifier_from_string(std::string_view name);

struct Provenance {
  std::string file;
  std::string rule;
  std::string ident;

  friend auto operator<=>(const Provenance&, const Provenance&) = default;
};

struct SubSignature {
  std::uint64_t id = 0;
  StringKind kind = StringKind::Text;
  Bytes pattern;
  /// HEX_WILD only: 0xFF fixed, 0x00 wildcard, nibble masks 0xF0/0x0F.
  std::optional<Bytes> mask;
  ModifierSet modifiers;
  std::vector<Provenance> provenance;

  friend bool operator==(const SubSignature&, const SubSignature&) = default;
};

/// Deterministic content id over (kind, pattern, mask, modifiers).
std::uint64_t content_id(StringKind kind, std::span<const std::uint8_t> pattern,
                         const std::optional<Bytes>& mask, ModifierSet modifiers);

enum class SkipReason : std::uint8_t {
  Regex,
  HexJump,
  HexAlternation,
  UnknownModifier,
  BadEscape,
  BadHex,
  Empty,
  NoFixedByte,
};

std::string_view to_string(SkipReason reason);

struct Skip {
  SkipReason reason;
  std::string detail;
};

/// Result of decoding one string definition: either a sub-signature (without
/// provenance) or the reason it was not kept.
struct Decoded {
  std::optional<SubSignature> signature;
  std::optional<Skip> skip;
};

Decoded decode_sub_signature(std::string_view identifier, std::string_view raw_definition);

/// Inverse of text-literal escaping, used by the synthetic rule writer and
/// tests: printable ASCII passes through, everything else becomes \xNN.
std::string encode_text_literal(std::span<const std::uint8_t> bytes);

struct SignatureCatalog {
  std::vector<SubSignature> entries;  // sorted by id, unique
  std::string created_at;             // informational, not serialized
  std::vector<std::string> source_roots;

  std::size_t size() const { return entries.size(); }
  /// Entry index by id, or npos.
  std::size_t find(std::uint64_t id) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

bool operator==(const SignatureCatalog& a, const SignatureCatalog& b);

struct HarvestReport {
  std::size_t files = 0;
  std::size_t rules = 0;
  std::size_t definitions = 0;
  std::size_t kept = 0;
  std::size_t skipped_regex = 0;
  std::size_t skipped_jump = 0;
  std::size_t skipped_alternation = 0;
  std::size_t skipped_unknown_modifier = 0;
  std::size_t skipped_other = 0;
  std::vector<Diagnostic> diagnostics;

  std::string summary() const;
};

struct HarvestOptions {
  std::size_t threads = 1;
};

/// Walks every root (file or directory), parses candidate rule files and
/// merges their sub-signatures. Provenance file paths are relative to the
/// root they were found under so identical trees yield identical catalogs.
/// Throws Error{EmptyCatalog} when nothing survives.
SignatureCatalog harvest(const std::vector<std::filesystem::path>& roots,
                         HarvestReport* report = nullptr,
                         const HarvestOptions& options = {});

/// Builds a catalog from already-parsed rules (used by harvest and tests).
SignatureCatalog build_catalog(const std::vector<RawRule>& rules, HarvestReport* report = nullptr);

std::string save_catalog(const SignatureCatalog& catalog);
SignatureCatalog load_catalog(std::string_view bytes);

}  // namespace hayama::yara
