#include "hayama/scanner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <deque>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "hayama/error.hpp"

namespace hayama::scan {
namespace {

constexpr std::uint32_t kNone = 0xFFFFFFFFu;

std::uint8_t fold(std::uint8_t c) { return (c >= 'A' && c <= 'Z') ? static_cast<std::uint8_t>(c + 32) : c; }

bool is_word_byte(std::uint8_t c) {
  return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z');
}

Bytes widen(const Bytes& b) {
  Bytes out;
  out.reserve(b.size() * 2);
  for (std::uint8_t c : b) {
    out.push_back(c);
    out.push_back(0);
  }
  return out;
}

}  // namespace

std::uint32_t PatternAutomaton::Trie::step(std::uint32_t state, std::uint8_t c) const {
  while (true) {
    if (state == 0) return root_next[c];
    std::uint32_t lo = child_begin[state], hi = child_begin[state + 1];
    while (lo < hi) {
      std::uint32_t mid = (lo + hi) / 2;
      if (child_bytes[mid] < c) lo = mid + 1;
      else hi = mid;
    }
    if (lo < child_begin[state + 1] && child_bytes[lo] == c) return child_node[lo];
    state = fail[state];
  }
}

PatternAutomaton::Trie PatternAutomaton::build_trie(
    const std::vector<std::pair<Bytes, std::uint32_t>>& patterns, bool folded) {
  std::vector<std::vector<std::pair<std::uint8_t, std::uint32_t>>> children(1);
  std::vector<std::vector<std::uint32_t>> outputs(1);
  auto find_child = [&](std::uint32_t node, std::uint8_t c) -> std::uint32_t {
    for (const auto& [b, n] : children[node])
      if (b == c) return n;
    return kNone;
  };

  for (const auto& [bytes, hit] : patterns) {
    std::uint32_t node = 0;
    for (std::uint8_t raw : bytes) {
      std::uint8_t c = folded ? fold(raw) : raw;
      std::uint32_t next = find_child(node, c);
      if (next == kNone) {
        next = static_cast<std::uint32_t>(children.size());
        children[node].emplace_back(c, next);
        children.emplace_back();
        outputs.emplace_back();
      }
      node = next;
    }
    outputs[node].push_back(hit);
  }

  const std::size_t n = children.size();
  Trie t;
  t.folded = folded;
  t.fail.assign(n, 0);
  t.dict.assign(n, kNone);

  std::deque<std::uint32_t> queue;
  for (const auto& [c, v] : children[0]) queue.push_back(v);
  while (!queue.empty()) {
    std::uint32_t u = queue.front();
    queue.pop_front();
    for (const auto& [c, v] : children[u]) {
      std::uint32_t f = t.fail[u];
      std::uint32_t target = kNone;
      while (true) {
        target = find_child(f, c);
        if (target != kNone || f == 0) break;
        f = t.fail[f];
      }
      t.fail[v] = target == kNone ? 0 : target;
      std::uint32_t fv = t.fail[v];
      t.dict[v] = !outputs[fv].empty() ? fv : t.dict[fv];
      queue.push_back(v);
    }
  }

  t.root_next.assign(256, 0);
  for (const auto& [c, v] : children[0]) t.root_next[c] = v;
  t.child_begin.resize(n + 1);
  t.out_begin.resize(n + 1);
  for (std::size_t u = 0; u < n; ++u) {
    auto& ch = children[u];
    std::sort(ch.begin(), ch.end());
    t.child_begin[u] = static_cast<std::uint32_t>(t.child_bytes.size());
    for (const auto& [c, v] : ch) {
      t.child_bytes.push_back(c);
      t.child_node.push_back(v);
    }
    t.out_begin[u] = static_cast<std::uint32_t>(t.out_hits.size());
    t.out_hits.insert(t.out_hits.end(), outputs[u].begin(), outputs[u].end());
  }
  t.child_begin[n] = static_cast<std::uint32_t>(t.child_bytes.size());
  t.out_begin[n] = static_cast<std::uint32_t>(t.out_hits.size());
  return t;
}

PatternAutomaton PatternAutomaton::compile(const yara::SignatureCatalog& catalog) {
  using yara::StringKind;
  if (catalog.entries.empty()) throw Error(ErrorCode::Compile, "cannot compile an empty catalog");

  PatternAutomaton a;
  std::vector<std::pair<Bytes, std::uint32_t>> exact, folded;

  for (std::size_t j = 0; j < catalog.entries.size(); ++j) {
    const auto& sig = catalog.entries[j];
    const auto feature = static_cast<std::uint32_t>(j);
    const std::string name = u64_hex(sig.id);
    a.col_ids_.push_back(name);
    const bool fullword = sig.modifiers.has(yara::kFullword);
    a.any_fullword_ |= fullword;

    if (sig.pattern.empty()) throw Error(ErrorCode::Compile, "entry " + name + " has an empty pattern");

    if (sig.kind == StringKind::HexWild) {
      if (!sig.mask || sig.mask->size() != sig.pattern.size())
        throw Error(ErrorCode::Compile, "entry " + name + " has no mask of matching length");
      if (sig.modifiers.has(yara::kNoCase) || sig.modifiers.has(yara::kWide))
        throw Error(ErrorCode::Compile, "entry " + name + ": nocase/wide unsupported on masked hex");
      // Anchor on the longest run of fully fixed bytes (first one on ties).
      std::size_t best_start = 0, best_len = 0;
      for (std::size_t i = 0; i < sig.mask->size();) {
        if ((*sig.mask)[i] != 0xFF) {
          ++i;
          continue;
        }
        std::size_t k = i;
        while (k < sig.mask->size() && (*sig.mask)[k] == 0xFF) ++k;
        if (k - i > best_len) {
          best_len = k - i;
          best_start = i;
        }
        i = k;
      }
      if (best_len == 0) throw Error(ErrorCode::Compile, "entry " + name + " has no fully fixed byte to anchor on");
      Bytes masked(sig.pattern.size());
      for (std::size_t i = 0; i < masked.size(); ++i) masked[i] = sig.pattern[i] & (*sig.mask)[i];
      a.verifiers_.push_back({static_cast<std::uint32_t>(best_start), std::move(masked), *sig.mask});
      a.hits_.push_back({feature, static_cast<std::uint32_t>(best_len),
                         static_cast<std::uint32_t>(a.verifiers_.size() - 1), fullword});
      exact.emplace_back(Bytes(sig.pattern.begin() + static_cast<std::ptrdiff_t>(best_start),
                               sig.pattern.begin() + static_cast<std::ptrdiff_t>(best_start + best_len)),
                         static_cast<std::uint32_t>(a.hits_.size() - 1));
      a.max_len_ = std::max(a.max_len_, sig.pattern.size());
      continue;
    }
    if (sig.kind == StringKind::Regex)
      throw Error(ErrorCode::Compile, "entry " + name + " is a regular expression");

    std::vector<Bytes> variants{sig.pattern};
    if (sig.modifiers.has(yara::kWide)) variants.push_back(widen(sig.pattern));
    auto& target = sig.modifiers.has(yara::kNoCase) ? folded : exact;
    for (auto& v : variants) {
      a.max_len_ = std::max(a.max_len_, v.size());
      a.hits_.push_back({feature, static_cast<std::uint32_t>(v.size()), kNone, fullword});
      target.emplace_back(std::move(v), static_cast<std::uint32_t>(a.hits_.size() - 1));
    }
  }
  a.exact_ = build_trie(exact, false);
  a.folded_ = build_trie(folded, true);
  return a;
}

std::size_t PatternAutomaton::window_overlap() const {
  return max_len_ - 1 + (any_fullword_ ? 2 : 0);
}

// `end` is the index one past the last byte of the automaton match.
bool PatternAutomaton::accept(const Hit& hit, const Window& w, std::size_t end) const {
  std::size_t start, length;
  if (hit.verifier != kNone) {
    const Verifier& v = verifiers_[hit.verifier];
    std::size_t anchor_start = end - hit.length;
    if (anchor_start < v.anchor_offset) return false;
    start = anchor_start - v.anchor_offset;
    length = v.pattern.size();
    if (start + length > w.data.size()) return false;
    for (std::size_t i = 0; i < length; ++i)
      if ((w.data[start + i] & v.mask[i]) != v.pattern[i]) return false;
  } else {
    start = end - hit.length;
    length = hit.length;
  }
  if (!hit.fullword) return true;
  // Boundary bytes that fall outside the window are unknown here; another
  // window with full context will see this occurrence.
  if (start == 0) {
    if (!w.at_file_start) return false;
  } else if (is_word_byte(w.data[start - 1])) {
    return false;
  }
  std::size_t after = start + length;
  if (after == w.data.size()) return w.at_file_end;
  return !is_word_byte(w.data[after]);
}

void PatternAutomaton::scan_window(const Window& w, std::vector<std::uint8_t>& marks) const {
  auto report = [&](const Trie& t, std::uint32_t state, std::size_t end) {
    std::uint32_t node = t.out_begin[state] != t.out_begin[state + 1] ? state : t.dict[state];
    for (; node != kNone; node = t.dict[node]) {
      for (std::uint32_t k = t.out_begin[node]; k < t.out_begin[node + 1]; ++k) {
        const Hit& hit = hits_[t.out_hits[k]];
        if (!marks[hit.feature] && accept(hit, w, end)) marks[hit.feature] = 1;
      }
    }
  };
  const bool use_exact = !exact_.empty();
  const bool use_folded = !folded_.empty();
  std::uint32_t se = 0, sf = 0;
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    std::uint8_t c = w.data[i];
    if (use_exact) {
      se = exact_.step(se, c);
      if (se != 0) report(exact_, se, i + 1);
    }
    if (use_folded) {
      sf = folded_.step(sf, fold(c));
      if (sf != 0) report(folded_, sf, i + 1);
    }
  }
}

namespace {
std::vector<std::uint32_t> collect(const std::vector<std::uint8_t>& marks) {
  std::vector<std::uint32_t> out;
  for (std::size_t j = 0; j < marks.size(); ++j)
    if (marks[j]) out.push_back(static_cast<std::uint32_t>(j));
  return out;
}
}  // namespace

std::vector<std::uint32_t> PatternAutomaton::scan_bytes(std::span<const std::uint8_t> data) const {
  std::vector<std::uint8_t> marks(feature_count(), 0);
  scan_window({data, true, true}, marks);
  return collect(marks);
}

std::vector<std::uint32_t> PatternAutomaton::scan_file(const std::filesystem::path& path, std::size_t chunk_size,
                                                       std::uint64_t* bytes_read) const {
  if (chunk_size == 0) throw Error(ErrorCode::Validation, "chunk_size must be positive");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string() + " at offset 0");

  const std::size_t overlap = window_overlap();
  const std::size_t capacity = chunk_size + overlap;
  std::vector<std::uint8_t> marks(feature_count(), 0);
  Bytes buf;
  buf.reserve(capacity);
  std::uint64_t window_start = 0;
  std::uint64_t total = 0;
  bool eof = false;

  auto fill = [&] {
    std::size_t have = buf.size();
    buf.resize(capacity);
    in.read(reinterpret_cast<char*>(buf.data() + have), static_cast<std::streamsize>(capacity - have));
    auto got = static_cast<std::size_t>(in.gcount());
    buf.resize(have + got);
    total += got;
    if (in.bad()) throw Error(ErrorCode::Io, "read failed: " + path.string() + " at offset " + std::to_string(total));
    if (have + got < capacity) {
      eof = true;
    } else {
      eof = in.peek() == std::char_traits<char>::eof();
      if (in.bad()) throw Error(ErrorCode::Io, "read failed: " + path.string() + " at offset " + std::to_string(total));
    }
  };

  fill();
  while (true) {
    scan_window({buf, window_start == 0, eof}, marks);
    if (eof) break;
    buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(chunk_size));
    window_start += chunk_size;
    fill();
  }
  if (bytes_read) *bytes_read = total;
  return collect(marks);
}

bool OccurrenceMatrix::get(std::size_t r, std::uint32_t c) const {
  auto cells = row(r);
  return std::binary_search(cells.begin(), cells.end(), c);
}

void OccurrenceMatrix::append_row(std::span<const std::uint32_t> sorted_cols) {
  cols.insert(cols.end(), sorted_cols.begin(), sorted_cols.end());
  offsets.push_back(cols.size());
  ++n_rows;
}

void OccurrenceMatrix::validate() const {
  if (offsets.size() != n_rows + 1 || offsets.front() != 0 || offsets.back() != cols.size())
    throw Error(ErrorCode::Integrity, "matrix: row offsets inconsistent with nnz");
  for (std::size_t r = 0; r < n_rows; ++r) {
    if (offsets[r] > offsets[r + 1]) throw Error(ErrorCode::Integrity, "matrix: offsets not monotone");
    auto cells = row(r);
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (cells[k] >= n_cols) throw Error(ErrorCode::Integrity, "matrix: column index out of range");
      if (k > 0 && cells[k - 1] >= cells[k]) throw Error(ErrorCode::Integrity, "matrix: columns not increasing");
    }
  }
  if (!row_ids.empty() && row_ids.size() != n_rows) throw Error(ErrorCode::Integrity, "matrix: row_ids size");
  if (!col_ids.empty() && col_ids.size() != n_cols) throw Error(ErrorCode::Integrity, "matrix: col_ids size");
  if (labels && labels->size() != n_rows) throw Error(ErrorCode::Integrity, "matrix: labels size");
}

bool ScanReport::partial_failure() const {
  return std::any_of(rows.begin(), rows.end(), [](const RowReport& r) { return r.error.has_value(); });
}

std::string ScanReport::to_jsonl() const {
  using nlohmann::json;
  std::string out;
  json header = {{"format", "hayama-scan-report"},
                 {"version", 1},
                 {"patterns", patterns},
                 {"chunk_size", chunk_size},
                 {"overlap", overlap},
                 {"matching",
                  {{"default", "raw bytes (ascii)"},
                   {"wide", "ascii form plus UTF-16LE interleaving"},
                   {"nocase", "ASCII letters only"},
                   {"fullword", "neighbouring bytes absent or not [A-Za-z0-9]"},
                   {"occurrence", "presence only"}}}};
  out += header.dump() + "\n";
  for (const auto& r : rows) {
    json j = {{"row", r.row}, {"path", r.path}, {"bytes", r.bytes}, {"millis", r.millis}, {"fired", r.fired}};
    if (r.error) j["error"] = *r.error;
    out += j.dump() + "\n";
  }
  return out;
}

OccurrenceMatrix scan_corpus(const PatternAutomaton& automaton, const data::CorpusManifest& manifest,
                             const ScanOptions& options, ScanReport* report) {
  std::string missing;
  std::size_t n_missing = 0;
  for (const auto& rec : manifest.records) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(rec.path, ec)) {
      missing += (n_missing++ ? ", " : "") + rec.path.string();
    }
  }
  if (n_missing) throw Error(ErrorCode::Io, std::to_string(n_missing) + " manifest file(s) missing: " + missing);

  const std::size_t n = manifest.size();
  std::vector<std::vector<std::uint32_t>> rows(n);
  std::vector<RowReport> row_reports(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      RowReport& rr = row_reports[i];
      rr.row = i;
      rr.path = manifest.records[i].path.generic_string();
      auto t0 = std::chrono::steady_clock::now();
      try {
        rows[i] = automaton.scan_file(manifest.records[i].path, options.chunk_size, &rr.bytes);
      } catch (const Error& e) {
        rows[i].clear();
        rr.error = e.what();
      }
      rr.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      rr.fired = rows[i].size();
    }
  };
  std::size_t n_threads = std::max<std::size_t>(1, std::min(options.threads, n));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  OccurrenceMatrix m;
  m.n_cols = automaton.feature_count();
  m.col_ids = automaton.col_ids();
  m.labels = manifest.labels();
  for (std::size_t i = 0; i < n; ++i) {
    m.append_row(rows[i]);
    m.row_ids.push_back(manifest.records[i].key);
  }
  if (report) {
    report->chunk_size = options.chunk_size;
    report->overlap = automaton.window_overlap();
    report->patterns = automaton.pattern_count();
    report->rows = std::move(row_reports);
  }
  return m;
}

}  // namespace hayama::scan
