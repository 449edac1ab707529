#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace teachaudit {

/// SHA-256 digest value.
struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  std::string hex() const;
  /// First eight bytes, big-endian. Used to seed per-request randomness.
  std::uint64_t prefix64() const;
  static Digest from_hex(std::string_view hex);

  bool operator==(const Digest&) const = default;
  auto operator<=>(const Digest&) const = default;
};

Digest sha256(std::string_view data);
inline std::string sha256_hex(std::string_view data) { return sha256(data).hex(); }

}  // namespace teachaudit
