#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hids {

struct Permissions {
  bool readable = false;
  bool writable = false;
  bool executable = false;
  bool shared = false;  // 's' vs 'p'

  bool operator==(const Permissions&) const = default;
};

// Parses exactly four characters matching [r-][w-][x-][ps].
bool parse_permissions(std::string_view text, Permissions& out);
std::string to_string(const Permissions& perms);

// One line of /proc/<pid>/maps.
struct MemoryRegion {
  std::uint64_t start_addr = 0;
  std::uint64_t end_addr = 0;
  Permissions perms;
  std::uint64_t offset = 0;
  std::string device = "00:00";
  std::uint64_t inode = 0;
  std::string path;  // empty for anonymous mappings

  std::uint64_t size() const { return end_addr - start_addr; }

  bool operator==(const MemoryRegion&) const = default;
};

// Which fixed field of a maps line failed to parse.
enum class MapsField {
  kAddressPair,
  kPerms,
  kOffset,
  kDevice,
  kInode,
};

const char* to_string(MapsField field);

class MapsParseError : public std::runtime_error {
 public:
  MapsParseError(std::string line, MapsField field, std::size_t line_number);

  const std::string& line() const noexcept { return line_; }
  MapsField field() const noexcept { return field_; }
  // 1-based; 0 when the error came from parse_maps_line directly.
  std::size_t line_number() const noexcept { return line_number_; }

 private:
  std::string line_;
  MapsField field_;
  std::size_t line_number_;
};

MemoryRegion parse_maps_line(std::string_view line);

// One region per non-empty line, in input order. The first malformed line
// throws MapsParseError carrying its 1-based line number.
std::vector<MemoryRegion> parse_maps(std::string_view document);

// Canonical single-space procfs rendering, without a trailing newline:
// `%08x-%08x perms %08x dev inode[ path]`.
std::string render_maps_line(const MemoryRegion& region);
std::string render_maps(const std::vector<MemoryRegion>& regions);

inline constexpr std::string_view kDeletedSuffix = " (deleted)";

bool has_deleted_backing(const MemoryRegion& region);

// Anonymous mappings, bracketed pseudo-paths such as [heap] or [vdso], and
// mappings whose backing file was deleted.
bool is_special_region(const MemoryRegion& region);

// Readable, executable and not special. Only these regions are hashed.
bool is_hashable_region(const MemoryRegion& region);

enum class RegionClass {
  kHashable,
  kSpecial,
  kNotExecutable,  // also covers unreadable regions
};

RegionClass classify_region(const MemoryRegion& region);

}  // namespace hids
