#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace srm {

/// Incremental 64-bit FNV-1a content hash.
class Fingerprint {
 public:
  Fingerprint& add(std::string_view bytes);
  Fingerprint& add(std::uint64_t value);
  Fingerprint& add(std::int64_t value) { return add(static_cast<std::uint64_t>(value)); }
  Fingerprint& add(double value);
  std::uint64_t value() const { return hash_; }
  std::string hex() const;

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

std::string to_hex(std::uint64_t value);

/// FNV-1a of a file's bytes, as 16 lowercase hex digits.
std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace srm
