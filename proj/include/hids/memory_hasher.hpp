#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "hids/host.hpp"
#include "hids/procmaps.hpp"

namespace hids {

// 64 lowercase hex characters.
class HashHex {
 public:
  static std::optional<HashHex> parse(std::string_view text);
  static HashHex of_digest(std::span<const std::uint8_t, 32> digest);

  const std::string& str() const { return value_; }

  auto operator<=>(const HashHex&) const = default;

 private:
  explicit HashHex(std::string value) : value_(std::move(value)) {}
  std::string value_;
};

struct ModuleDump {
  ProcessRecord process;
  std::string module_path;
  Bytes bytes;
  std::size_t region_count = 0;
};

// Concatenates, lowest address first, every hashable region whose path is
// exactly `module_path`. Reads the maps document once.
ModuleDump read_module_memory(Host& host, const ProcessRecord& process,
                              const std::string& module_path);

// Same, over an already-read maps snapshot.
ModuleDump read_module_memory(Host& host, const ProcessRecord& process,
                              std::span<const MemoryRegion> regions,
                              const std::string& module_path);

HashHex get_module_hash(const ModuleDump& dump);

HashHex sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace hids
