#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace hids {

inline constexpr std::size_t kSha256Size = 32;
using Sha256Digest = std::array<std::uint8_t, kSha256Size>;

// 32-byte HMAC key used to seal baseline and allow-list files.
class SealKey {
 public:
  static constexpr std::size_t kSize = 32;

  SealKey() = default;  // all-zero development key
  explicit SealKey(std::span<const std::uint8_t, kSize> bytes);

  // Exactly 64 hex characters, surrounding whitespace ignored.
  static std::optional<SealKey> from_hex(std::string_view hex);

  std::span<const std::uint8_t, kSize> bytes() const { return bytes_; }
  bool is_zero() const;

 private:
  std::array<std::uint8_t, kSize> bytes_{};
};

Sha256Digest sha256(std::span<const std::uint8_t> data);
Sha256Digest sha256(std::string_view data);

Sha256Digest hmac_sha256(const SealKey& key, std::string_view data);

std::string to_hex(std::span<const std::uint8_t> bytes);

// Lowercase-only; rejects odd length and any other character.
std::optional<std::string> from_hex(std::string_view hex);

bool constant_time_equal(std::span<const std::uint8_t> a,
                         std::span<const std::uint8_t> b);

}  // namespace hids
