#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hayama {

using Bytes = std::vector<std::uint8_t>;

/// 64-bit FNV-1a. Stable across platforms; used for sub-signature ids.
std::uint64_t fnv1a64(std::span<const std::uint8_t> data,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

std::uint32_t crc32(std::span<const std::uint8_t> data);

/// Lower-case hex SHA-256 of a byte range (provenance digests).
std::string sha256_hex(std::span<const std::uint8_t> data);

std::string to_hex(std::span<const std::uint8_t> data);
std::string u64_hex(std::uint64_t value);
/// Throws Error{BadFormat} on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_file(const std::filesystem::path& path, std::string_view text);

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

double sigmoid(double margin);

}  // namespace hayama
