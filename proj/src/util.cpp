#include "hayama/util.hpp"

#include <openssl/sha.h>
#include <zlib.h>

#include <cmath>
#include <fstream>

#include "hayama/error.hpp"

namespace hayama {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "io";
    case ErrorCode::Validation: return "validation";
    case ErrorCode::EmptyCatalog: return "empty-catalog";
    case ErrorCode::BadFormat: return "bad-format";
    case ErrorCode::VersionMismatch: return "version-mismatch";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::ChecksumMismatch: return "checksum-mismatch";
    case ErrorCode::Integrity: return "integrity";
    case ErrorCode::Compile: return "compile";
    case ErrorCode::SingleClass: return "single-class";
    case ErrorCode::Shape: return "shape";
    case ErrorCode::Alignment: return "alignment";
    case ErrorCode::MissingKey: return "missing-key";
  }
  return "unknown";
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t b : data) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in slices for very large buffers.
  std::size_t off = 0;
  while (off < data.size()) {
    std::size_t n = std::min<std::size_t>(data.size() - off, 1u << 30);
    crc = ::crc32(crc, data.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string sha256_hex(std::span<const std::uint8_t> data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(data.data(), data.size(), digest);
  return to_hex({digest, SHA256_DIGEST_LENGTH});
}

std::string to_hex(std::span<const std::uint8_t> data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (std::uint8_t b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

std::string u64_hex(std::uint64_t value) {
  std::uint8_t be[8];
  for (int i = 0; i < 8; ++i) be[i] = static_cast<std::uint8_t>(value >> (56 - 8 * i));
  return to_hex(be);
}

namespace {
int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(ErrorCode::BadFormat, "odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::BadFormat, "invalid hex digit");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  auto size = in.tellg();
  if (size < 0) throw Error(ErrorCode::Io, "cannot size " + path.string());
  in.seekg(0);
  Bytes data(static_cast<std::size_t>(size));
  if (!data.empty() && !in.read(reinterpret_cast<char*>(data.data()), size))
    throw Error(ErrorCode::Io, "read failed: " + path.string());
  return data;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  write_file(path, as_bytes(text));
}

double sigmoid(double margin) {
  if (margin >= 0) return 1.0 / (1.0 + std::exp(-margin));
  double e = std::exp(margin);
  return e / (1.0 + e);
}

}  // namespace hayama
