// Binary CSR matrix file (little-endian):
//   "HYM1" u32 version u64 n_rows u64 n_cols u64 nnz u8 has_labels
//   (n_rows+1) x u64 offsets, nnz x u32 columns, [n_rows x u8 labels], u32 crc32

#include <cstring>
#include <limits>

#include <nlohmann/json.hpp>

#include "hayama/error.hpp"
#include "hayama/scanner.hpp"

namespace hayama::scan {
namespace {

constexpr char kMagic[4] = {'H', 'Y', 'M', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderSize = 4 + 4 + 8 + 8 + 8 + 1;

template <typename T>
void put(Bytes& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get(std::span<const std::uint8_t> in, std::size_t& pos) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[pos + i]) << (8 * i);
  pos += sizeof(T);
  return v;
}

}  // namespace

Bytes encode_matrix(const OccurrenceMatrix& m) {
  m.validate();
  Bytes out;
  out.reserve(kHeaderSize + 8 * m.offsets.size() + 4 * m.cols.size() + m.n_rows + 4);
  out.insert(out.end(), kMagic, kMagic + 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, m.n_rows);
  put<std::uint64_t>(out, m.n_cols);
  put<std::uint64_t>(out, m.cols.size());
  put<std::uint8_t>(out, m.labels ? 1 : 0);
  for (auto o : m.offsets) put<std::uint64_t>(out, o);
  for (auto c : m.cols) put<std::uint32_t>(out, c);
  if (m.labels)
    for (auto l : *m.labels) put<std::uint8_t>(out, l);
  put<std::uint32_t>(out, crc32(out));
  return out;
}

OccurrenceMatrix decode_matrix(std::span<const std::uint8_t> in) {
  if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0)
    throw Error(ErrorCode::BadFormat, "matrix: bad magic");
  if (in.size() < kHeaderSize + 4) throw Error(ErrorCode::Truncated, "matrix: truncated header");
  std::size_t pos = 4;
  auto version = get<std::uint32_t>(in, pos);
  if (version != kVersion) throw Error(ErrorCode::VersionMismatch, "matrix: unsupported version " + std::to_string(version));

  OccurrenceMatrix m;
  m.n_rows = get<std::uint64_t>(in, pos);
  m.n_cols = get<std::uint64_t>(in, pos);
  std::uint64_t nnz = get<std::uint64_t>(in, pos);
  std::uint8_t has_labels = get<std::uint8_t>(in, pos);

  constexpr std::uint64_t kLimit = std::numeric_limits<std::uint64_t>::max() / 16;
  if (m.n_rows > kLimit || nnz > kLimit || has_labels > 1)
    throw Error(ErrorCode::Truncated, "matrix: header framing is inconsistent");
  std::uint64_t expected = kHeaderSize + 8 * (m.n_rows + 1) + 4 * nnz + (has_labels ? m.n_rows : 0) + 4;
  if (in.size() < expected) throw Error(ErrorCode::Truncated, "matrix: file shorter than header declares");
  if (in.size() > expected) throw Error(ErrorCode::Truncated, "matrix: trailing bytes after payload");

  std::size_t body = in.size() - 4;
  std::size_t crc_pos = body;
  if (crc32(in.first(body)) != get<std::uint32_t>(in, crc_pos))
    throw Error(ErrorCode::ChecksumMismatch, "matrix: checksum mismatch");

  m.offsets.resize(m.n_rows + 1);
  for (auto& o : m.offsets) o = get<std::uint64_t>(in, pos);
  m.cols.resize(nnz);
  for (auto& c : m.cols) c = get<std::uint32_t>(in, pos);
  if (has_labels) {
    m.labels.emplace(m.n_rows);
    for (auto& l : *m.labels) l = get<std::uint8_t>(in, pos);
  }
  m.validate();
  return m;
}

std::string encode_sidecar(const OccurrenceMatrix& m, const std::string& provenance_json) {
  nlohmann::json j = {{"row_ids", m.row_ids}, {"col_ids", m.col_ids}};
  if (!provenance_json.empty()) j["provenance"] = nlohmann::json::parse(provenance_json);
  return j.dump() + "\n";
}

void apply_sidecar(OccurrenceMatrix& m, std::string_view sidecar_json) {
  auto j = nlohmann::json::parse(sidecar_json, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("row_ids") || !j.contains("col_ids"))
    throw Error(ErrorCode::BadFormat, "matrix sidecar: expected {row_ids, col_ids}");
  m.row_ids = j["row_ids"].get<std::vector<std::string>>();
  m.col_ids = j["col_ids"].get<std::vector<std::string>>();
  if (m.row_ids.size() != m.n_rows || m.col_ids.size() != m.n_cols)
    throw Error(ErrorCode::Integrity, "matrix sidecar: id counts do not match matrix shape");
}

std::filesystem::path sidecar_path(const std::filesystem::path& matrix_path) {
  auto p = matrix_path;
  p += ".ids.json";
  return p;
}

void save_matrix(const OccurrenceMatrix& m, const std::filesystem::path& path, const std::string& provenance_json) {
  write_file(path, encode_matrix(m));
  write_file(sidecar_path(path), encode_sidecar(m, provenance_json));
}

OccurrenceMatrix load_matrix(const std::filesystem::path& path) {
  OccurrenceMatrix m = decode_matrix(read_file(path));
  Bytes side = read_file(sidecar_path(path));
  apply_sidecar(m, std::string_view(reinterpret_cast<const char*>(side.data()), side.size()));
  return m;
}

}  // namespace hayama::scan
