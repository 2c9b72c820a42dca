#include <algorithm>
#include <atomic>
#include <cstdio>
#include <map>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "hayama/error.hpp"
#include "hayama/yara.hpp"

namespace hayama::yara {

using nlohmann::json;

std::size_t SignatureCatalog::find(std::uint64_t id) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), id,
                             [](const SubSignature& s, std::uint64_t v) { return s.id < v; });
  return it != entries.end() && it->id == id ? static_cast<std::size_t>(it - entries.begin()) : npos;
}

bool operator==(const SignatureCatalog& a, const SignatureCatalog& b) {
  return a.entries == b.entries && a.source_roots == b.source_roots;
}

std::string HarvestReport::summary() const {
  std::ostringstream os;
  os << "files=" << files << " rules=" << rules << " definitions=" << definitions
     << " kept=" << kept << " skipped{regex=" << skipped_regex << " jump=" << skipped_jump
     << " alternation=" << skipped_alternation << " modifier=" << skipped_unknown_modifier
     << " other=" << skipped_other << "} diagnostics=" << diagnostics.size();
  return os.str();
}

namespace {

void count_skip(HarvestReport& report, SkipReason reason) {
  switch (reason) {
    case SkipReason::Regex: ++report.skipped_regex; break;
    case SkipReason::HexJump: ++report.skipped_jump; break;
    case SkipReason::HexAlternation: ++report.skipped_alternation; break;
    case SkipReason::UnknownModifier: ++report.skipped_unknown_modifier; break;
    default: ++report.skipped_other; break;
  }
}

void merge_rules(const std::vector<RawRule>& rules, std::map<std::uint64_t, SubSignature>& merged,
                 HarvestReport& report) {
  for (const auto& rule : rules) {
    ++report.rules;
    for (const auto& [ident, raw] : rule.strings_block) {
      ++report.definitions;
      Decoded d = decode_sub_signature(ident, raw);
      if (!d.signature) {
        count_skip(report, d.skip->reason);
        report.diagnostics.push_back(
            {rule.source_path, 0,
             "rule " + rule.rule_name + ": skipped " + std::string(to_string(d.skip->reason)) + " " +
                 d.skip->detail});
        continue;
      }
      ++report.kept;
      SubSignature& sig = *d.signature;
      auto [it, inserted] = merged.try_emplace(sig.id, sig);
      if (!inserted && (it->second.kind != sig.kind || it->second.pattern != sig.pattern ||
                        it->second.mask != sig.mask || it->second.modifiers != sig.modifiers))
        throw Error(ErrorCode::Integrity, "sub-signature id collision on " + u64_hex(sig.id));
      it->second.provenance.push_back({rule.source_path, rule.rule_name, ident});
    }
  }
}

SignatureCatalog finish(std::map<std::uint64_t, SubSignature>& merged) {
  SignatureCatalog cat;
  cat.entries.reserve(merged.size());
  for (auto& [id, sig] : merged) {
    std::sort(sig.provenance.begin(), sig.provenance.end());
    sig.provenance.erase(std::unique(sig.provenance.begin(), sig.provenance.end()), sig.provenance.end());
    cat.entries.push_back(std::move(sig));
  }
  return cat;
}

bool has_extension(const std::filesystem::path& p, std::initializer_list<std::string_view> exts) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::any_of(exts.begin(), exts.end(), [&](std::string_view e) { return ext == e; });
}

struct Candidate {
  std::filesystem::path path;
  std::string display;  // path relative to its root
};

std::vector<Candidate> list_candidates(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::vector<Candidate> out;
  std::error_code ec;
  if (!fs::exists(root, ec)) throw Error(ErrorCode::Io, "rule root does not exist: " + root.string());
  auto consider = [&](const fs::path& p, std::string display) {
    if (has_extension(p, {".yar", ".yara", ".rule", ".txt"})) out.push_back({p, std::move(display)});
  };
  if (fs::is_regular_file(root)) {
    consider(root, root.filename().generic_string());
    return out;
  }
  for (auto it = fs::recursive_directory_iterator(root, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (it->is_regular_file()) consider(it->path(), it->path().lexically_relative(root).generic_string());
  }
  if (ec) throw Error(ErrorCode::Io, "cannot walk " + root.string() + ": " + ec.message());
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.display < b.display; });
  return out;
}

}  // namespace

SignatureCatalog build_catalog(const std::vector<RawRule>& rules, HarvestReport* report) {
  HarvestReport local;
  HarvestReport& rep = report ? *report : local;
  std::map<std::uint64_t, SubSignature> merged;
  merge_rules(rules, merged, rep);
  return finish(merged);
}

SignatureCatalog harvest(const std::vector<std::filesystem::path>& roots, HarvestReport* report,
                         const HarvestOptions& options) {
  HarvestReport local;
  HarvestReport& rep = report ? *report : local;

  std::vector<Candidate> files;
  for (const auto& root : roots) {
    auto found = list_candidates(root);
    files.insert(files.end(), std::make_move_iterator(found.begin()), std::make_move_iterator(found.end()));
  }

  // Parse in parallel; results land in per-file slots so merge order is fixed.
  std::vector<std::optional<ParseResult>> parsed(files.size());
  std::vector<std::string> io_errors(files.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      try {
        Bytes data = read_file(files[i].path);
        std::string_view text(reinterpret_cast<const char*>(data.data()), data.size());
        if (has_extension(files[i].path, {".txt"}) && text.find("rule ") == std::string_view::npos) continue;
        parsed[i] = parse_rule_file(files[i].display, text);
      } catch (const Error& e) {
        io_errors[i] = e.what();
      }
    }
  };
  std::size_t n_threads = std::max<std::size_t>(1, std::min(options.threads, files.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::map<std::uint64_t, SubSignature> merged;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!io_errors[i].empty()) throw Error(ErrorCode::Io, io_errors[i]);
    if (!parsed[i]) continue;
    ++rep.files;
    rep.diagnostics.insert(rep.diagnostics.end(), parsed[i]->diagnostics.begin(), parsed[i]->diagnostics.end());
    merge_rules(parsed[i]->rules, merged, rep);
  }

  SignatureCatalog cat = finish(merged);
  for (const auto& root : roots) cat.source_roots.push_back(root.generic_string());
  if (cat.entries.empty())
    throw Error(ErrorCode::EmptyCatalog, "harvest produced zero sub-signatures (" + rep.summary() + ")");
  return cat;
}

namespace {

constexpr std::string_view kCatalogFormat = "hayama-catalog";
constexpr int kCatalogVersion = 1;

std::string crc_hex(std::uint32_t crc) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc);
  return buf;
}

}  // namespace

std::string save_catalog(const SignatureCatalog& catalog) {
  std::string out;
  json header = {{"format", kCatalogFormat}, {"version", kCatalogVersion},
                 {"source_roots", catalog.source_roots}};
  out += header.dump() + "\n";
  for (const auto& sig : catalog.entries) {
    json j;
    j["id"] = u64_hex(sig.id);
    j["kind"] = to_string(sig.kind);
    j["pattern_hex"] = to_hex(sig.pattern);
    if (sig.mask) j["mask_hex"] = to_hex(*sig.mask);
    j["modifiers"] = modifier_names(sig.modifiers);
    json prov = json::array();
    for (const auto& p : sig.provenance) prov.push_back({{"file", p.file}, {"rule", p.rule}, {"ident", p.ident}});
    j["provenance"] = std::move(prov);
    out += j.dump() + "\n";
  }
  json trailer = {{"count", catalog.entries.size()}, {"crc32", crc_hex(crc32(as_bytes(out)))}};
  out += trailer.dump() + "\n";
  return out;
}

SignatureCatalog load_catalog(std::string_view bytes) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(bytes.substr(pos));
      pos = bytes.size();
    } else {
      lines.push_back(bytes.substr(pos, nl - pos));
      pos = nl + 1;
    }
  }
  if (lines.empty()) throw Error(ErrorCode::Truncated, "catalog: empty file");

  json header = json::parse(lines.front(), nullptr, false);
  if (header.is_discarded() || !header.is_object() || header.value("format", "") != kCatalogFormat)
    throw Error(ErrorCode::BadFormat, "catalog: missing hayama-catalog header");
  if (header.value("version", -1) != kCatalogVersion)
    throw Error(ErrorCode::VersionMismatch,
                "catalog: unsupported version " + header.value("version", json(-1)).dump());

  if (lines.size() < 2 || bytes.back() != '\n')
    throw Error(ErrorCode::Truncated, "catalog: missing trailer");
  json trailer = json::parse(lines.back(), nullptr, false);
  if (trailer.is_discarded() || !trailer.is_object() || !trailer.contains("crc32") || !trailer.contains("count"))
    throw Error(ErrorCode::Truncated, "catalog: missing trailer");
  std::size_t body_len = bytes.size() - lines.back().size() - 1;
  if (crc_hex(crc32(as_bytes(bytes.substr(0, body_len)))) != trailer["crc32"].get<std::string>())
    throw Error(ErrorCode::ChecksumMismatch, "catalog: checksum mismatch");
  std::size_t count = trailer["count"].get<std::size_t>();
  if (count != lines.size() - 2)
    throw Error(ErrorCode::Truncated, "catalog: record count mismatch");

  SignatureCatalog cat;
  cat.source_roots = header.value("source_roots", std::vector<std::string>{});
  for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
    json j = json::parse(lines[i], nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::BadFormat, "catalog: bad record " + std::to_string(i));
    try {
      SubSignature sig;
      auto kind = kind_from_string(j.at("kind").get<std::string>());
      if (!kind) throw Error(ErrorCode::BadFormat, "catalog: unknown kind");
      sig.kind = *kind;
      sig.pattern = from_hex(j.at("pattern_hex").get<std::string>());
      if (j.contains("mask_hex")) sig.mask = from_hex(j["mask_hex"].get<std::string>());
      for (const auto& m : j.at("modifiers")) {
        auto mod = modifier_from_string(m.get<std::string>());
        if (!mod) throw Error(ErrorCode::BadFormat, "catalog: unknown modifier");
        sig.modifiers.add(*mod);
      }
      for (const auto& p : j.at("provenance"))
        sig.provenance.push_back({p.at("file").get<std::string>(), p.at("rule").get<std::string>(),
                                  p.at("ident").get<std::string>()});
      sig.id = content_id(sig.kind, sig.pattern, sig.mask, sig.modifiers);
      if (u64_hex(sig.id) != j.at("id").get<std::string>())
        throw Error(ErrorCode::Integrity, "catalog: record " + std::to_string(i) + " id does not match content");
      if (!cat.entries.empty() && cat.entries.back().id >= sig.id)
        throw Error(ErrorCode::Integrity, "catalog: records not in canonical order");
      cat.entries.push_back(std::move(sig));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::BadFormat, std::string("catalog: ") + e.what());
    }
  }
  return cat;
}

}  // namespace hayama::yara
