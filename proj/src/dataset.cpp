#include "hayama/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "hayama/error.hpp"
#include "hayama/scanner.hpp"
#include "hayama/util.hpp"

namespace hayama::data {
namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return lines;
}

std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

bool looks_like_jsonl(const std::filesystem::path& path, std::string_view text) {
  auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return true;
  auto first = text.find_first_not_of(" \t\r\n");
  return first != std::string_view::npos && text[first] == '{';
}

std::string text_of(const std::filesystem::path& path) {
  Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

Split parse_split(std::string token, std::size_t line) {
  std::transform(token.begin(), token.end(), token.begin(), [](unsigned char c) { return std::toupper(c); });
  if (token == "TRAIN") return Split::Train;
  if (token == "TEST") return Split::Test;
  if (token == "VALID") return Split::Valid;
  throw Error(ErrorCode::Validation, "manifest line " + std::to_string(line) + ": unknown split '" + token + "'");
}

std::uint8_t parse_label(const std::string& token, std::size_t line) {
  if (token == "0") return 0;
  if (token == "1") return 1;
  throw Error(ErrorCode::Validation,
              "manifest line " + std::to_string(line) + ": label must be 0 or 1, got '" + token + "'");
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "TRAIN";
    case Split::Test: return "TEST";
    case Split::Valid: return "VALID";
  }
  return "?";
}

std::vector<std::string> CorpusManifest::keys() const {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.key);
  return out;
}

std::vector<std::uint8_t> CorpusManifest::labels() const {
  std::vector<std::uint8_t> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

void validate_manifest(const CorpusManifest& manifest) {
  std::unordered_set<std::string> seen;
  std::vector<std::string> dups;
  for (const auto& r : manifest.records) {
    if (r.key.empty()) throw Error(ErrorCode::Validation, "manifest: empty key");
    if (r.label > 1) throw Error(ErrorCode::Validation, "manifest: non-binary label for " + r.key);
    if (!seen.insert(r.key).second) dups.push_back(r.key);
  }
  if (!dups.empty()) {
    std::string msg = "manifest: duplicate key(s):";
    for (const auto& d : dups) msg += " " + d;
    throw Error(ErrorCode::Validation, msg);
  }
}

CorpusManifest parse_manifest(std::string_view text, bool json_lines, const std::filesystem::path& base_dir) {
  CorpusManifest m;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  auto lines = split_lines(text);
  if (json_lines) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      auto j = nlohmann::json::parse(lines[i], nullptr, false);
      if (j.is_discarded() || !j.is_object())
        throw Error(ErrorCode::Validation, "manifest line " + std::to_string(i + 1) + ": not a JSON object");
      for (const char* field : {"key", "path", "label", "split"})
        if (!j.contains(field))
          throw Error(ErrorCode::Validation, std::string("manifest: missing field '") + field + "'");
      SampleRecord r;
      r.key = j["key"].is_string() ? j["key"].get<std::string>() : j["key"].dump();
      r.path = resolve(j["path"].get<std::string>());
      r.label = parse_label(j["label"].is_string() ? j["label"].get<std::string>() : j["label"].dump(), i + 1);
      r.split = parse_split(j["split"].get<std::string>(), i + 1);
      m.records.push_back(std::move(r));
    }
  } else {
    if (lines.empty()) throw Error(ErrorCode::Validation, "manifest: missing header");
    auto header = split_csv(lines[0]);
    auto col = [&](std::string_view name) -> std::size_t {
      auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) throw Error(ErrorCode::Validation, "manifest: missing column '" + std::string(name) + "'");
      return static_cast<std::size_t>(it - header.begin());
    };
    std::size_t ck = col("key"), cp = col("path"), cl = col("label"), cs = col("split");
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto f = split_csv(lines[i]);
      if (f.size() != header.size())
        throw Error(ErrorCode::Validation, "manifest line " + std::to_string(i + 1) + ": wrong field count");
      SampleRecord r;
      r.key = f[ck];
      r.path = resolve(f[cp]);
      r.label = parse_label(f[cl], i + 1);
      r.split = parse_split(f[cs], i + 1);
      m.records.push_back(std::move(r));
    }
  }
  validate_manifest(m);
  return m;
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::string text = text_of(path);
  return parse_manifest(text, looks_like_jsonl(path, text), path.parent_path());
}

std::string manifest_to_csv(const CorpusManifest& manifest, const std::filesystem::path& base_dir) {
  std::string out = "key,path,label,split\n";
  for (const auto& r : manifest.records) {
    std::string p = base_dir.empty() ? r.path.generic_string() : r.path.lexically_relative(base_dir).generic_string();
    out += csv_field(r.key) + "," + csv_field(p) + "," + std::to_string(r.label) + "," +
           std::string(to_string(r.split)) + "\n";
  }
  return out;
}

SideFeatureTable parse_side_features(std::string_view text, bool json_lines, const CorpusManifest& manifest) {
  std::vector<std::string> names;
  std::unordered_map<std::string, std::vector<std::string>> cells;  // key -> raw cells
  auto lines = split_lines(text);

  if (json_lines) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      auto j = nlohmann::json::parse(lines[i], nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("key"))
        throw Error(ErrorCode::Validation, "side features line " + std::to_string(i + 1) + ": expected object with key");
      if (names.empty())
        for (auto it = j.begin(); it != j.end(); ++it)
          if (it.key() != "key") names.push_back(it.key());
      std::vector<std::string> row;
      for (const auto& n : names) {
        if (!j.contains(n)) throw Error(ErrorCode::Validation, "side features: row missing column " + n);
        const auto& v = j[n];
        if (v.is_null()) row.emplace_back("nan");
        else if (v.is_number()) row.push_back(v.dump());
        else if (v.is_string()) row.push_back(v.get<std::string>());
        else throw Error(ErrorCode::Validation, "side features: non-numeric cell in column " + n);
      }
      std::string key = j["key"].is_string() ? j["key"].get<std::string>() : j["key"].dump();
      cells[key] = std::move(row);
    }
  } else {
    if (lines.empty()) throw Error(ErrorCode::Validation, "side features: missing header");
    auto header = split_csv(lines[0]);
    if (header.empty() || header[0] != "key") throw Error(ErrorCode::Validation, "side features: first column must be 'key'");
    names.assign(header.begin() + 1, header.end());
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto f = split_csv(lines[i]);
      if (f.size() != header.size())
        throw Error(ErrorCode::Validation, "side features line " + std::to_string(i + 1) + ": wrong field count");
      std::string key = f[0];
      cells[key] = std::vector<std::string>(f.begin() + 1, f.end());
    }
  }

  SideFeatureTable t;
  t.feature_names = names;
  t.dim = names.size();
  t.values.reserve(manifest.size() * t.dim);
  std::vector<std::string> missing;
  for (const auto& rec : manifest.records) {
    auto it = cells.find(rec.key);
    if (it == cells.end()) {
      missing.push_back(rec.key);
      continue;
    }
    t.keys.push_back(rec.key);
    for (std::size_t c = 0; c < t.dim; ++c) {
      const std::string& raw = it->second[c];
      double v;
      if (raw.empty()) {
        v = std::nan("");
      } else {
        char* end = nullptr;
        v = std::strtod(raw.c_str(), &end);
        if (end != raw.c_str() + raw.size())
          throw Error(ErrorCode::Validation,
                      "side features: non-numeric cell '" + raw + "' (key " + rec.key + ", column " + names[c] + ")");
      }
      if (!std::isfinite(v)) {
        v = 0.0;
        ++t.imputed;
      }
      t.values.push_back(v);
    }
  }
  if (!missing.empty()) {
    std::string msg = "side features: missing key(s):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw Error(ErrorCode::MissingKey, msg);
  }
  return t;
}

SideFeatureTable load_side_features(const std::filesystem::path& path, const CorpusManifest& manifest) {
  std::string text = text_of(path);
  return parse_side_features(text, looks_like_jsonl(path, text), manifest);
}

std::string side_features_to_csv(const SideFeatureTable& table) {
  nlohmann::json num;
  std::string out = "key";
  for (const auto& n : table.feature_names) out += "," + csv_field(n);
  out += "\n";
  for (std::size_t r = 0; r < table.rows(); ++r) {
    out += csv_field(table.keys[r]);
    for (std::size_t c = 0; c < table.dim; ++c) {
      num = table.at(r, c);
      out += "," + num.dump();
    }
    out += "\n";
  }
  return out;
}

AlignedDataset align(const scan::OccurrenceMatrix& matrix, const CorpusManifest& manifest,
                     const SideFeatureTable* side) {
  if (matrix.row_ids.size() != manifest.size())
    throw Error(ErrorCode::Alignment, "align: matrix has " + std::to_string(matrix.row_ids.size()) +
                                          " rows, manifest has " + std::to_string(manifest.size()));
  for (std::size_t i = 0; i < manifest.size(); ++i)
    if (matrix.row_ids[i] != manifest.records[i].key)
      throw Error(ErrorCode::Alignment, "align: row id mismatch at index " + std::to_string(i));
  if (side) {
    if (side->rows() != manifest.size())
      throw Error(ErrorCode::Alignment, "align: side table row count differs from manifest");
    for (std::size_t i = 0; i < manifest.size(); ++i)
      if (side->keys[i] != manifest.records[i].key)
        throw Error(ErrorCode::Alignment, "align: side key mismatch at index " + std::to_string(i));
  }

  AlignedDataset out;
  for (LabeledView* v : {&out.train, &out.test, &out.valid}) {
    v->matrix = &matrix;
    v->side = side;
  }
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& rec = manifest.records[i];
    LabeledView& v = rec.split == Split::Train ? out.train : rec.split == Split::Test ? out.test : out.valid;
    v.rows.push_back(i);
    v.labels.push_back(rec.label);
  }

  std::unordered_set<std::string> train_keys;
  for (auto r : out.train.rows) train_keys.insert(manifest.records[r].key);
  for (auto r : out.test.rows)
    if (train_keys.count(manifest.records[r].key))
      throw Error(ErrorCode::Validation, "align: key present in both train and test: " + manifest.records[r].key);
  return out;
}

}  // namespace hayama::data
