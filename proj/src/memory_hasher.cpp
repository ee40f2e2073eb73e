#include "hids/memory_hasher.hpp"

#include <algorithm>
#include <cstdio>
#include <vector>

#include "hids/crypto.hpp"

namespace hids {

std::optional<HashHex> HashHex::parse(std::string_view text) {
  if (text.size() != 64) return std::nullopt;
  for (char c : text) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return std::nullopt;
  }
  return HashHex(std::string(text));
}

HashHex HashHex::of_digest(std::span<const std::uint8_t, 32> digest) {
  return HashHex(to_hex(digest));
}

ModuleDump read_module_memory(Host& host, const ProcessRecord& process,
                              const std::string& module_path) {
  auto regions = parse_maps(host.read_maps(process.pid));
  return read_module_memory(host, process, regions, module_path);
}

ModuleDump read_module_memory(Host& host, const ProcessRecord& process,
                              std::span<const MemoryRegion> regions,
                              const std::string& module_path) {
  std::vector<const MemoryRegion*> selected;
  for (const auto& r : regions) {
    if (r.path == module_path && is_hashable_region(r)) selected.push_back(&r);
  }
  std::sort(selected.begin(), selected.end(),
            [](const auto* a, const auto* b) { return a->start_addr < b->start_addr; });

  ModuleDump dump{process, module_path, {}, 0};
  for (const auto* r : selected) {
    Bytes chunk;
    try {
      chunk = host.read_mem(process.pid, r->start_addr, r->size());
    } catch (const HostError& e) {
      char addr[24];
      std::snprintf(addr, sizeof addr, "%llx",
                    static_cast<unsigned long long>(r->start_addr));
      throw HostError(e.code(), std::string("region ") + addr + " of " +
                                    module_path + ": " + e.what());
    }
    dump.bytes.insert(dump.bytes.end(), chunk.begin(), chunk.end());
    ++dump.region_count;
  }
  return dump;
}

HashHex sha256_hex(std::span<const std::uint8_t> bytes) {
  return HashHex::of_digest(sha256(bytes));
}

HashHex get_module_hash(const ModuleDump& dump) { return sha256_hex(dump.bytes); }

}  // namespace hids
