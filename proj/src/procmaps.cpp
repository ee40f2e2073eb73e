#include "hids/procmaps.hpp"

#include <charconv>
#include <cstdio>

namespace hids {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t'; }

// Splits off the next whitespace-delimited token, skipping leading blanks.
std::string_view next_token(std::string_view& rest) {
  std::size_t i = 0;
  while (i < rest.size() && is_space(rest[i])) ++i;
  std::size_t j = i;
  while (j < rest.size() && !is_space(rest[j])) ++j;
  std::string_view token = rest.substr(i, j - i);
  rest.remove_prefix(j);
  return token;
}

template <typename T>
bool parse_number(std::string_view text, int base, T& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out, base);
  return ec == std::errc() && ptr == last;
}

bool is_hex_digit(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') ||
         (c >= 'A' && c <= 'F');
}

bool valid_device(std::string_view dev) {
  auto colon = dev.find(':');
  if (colon == std::string_view::npos || colon == 0 ||
      colon + 1 == dev.size()) {
    return false;
  }
  for (std::size_t i = 0; i < dev.size(); ++i) {
    if (i == colon) continue;
    if (!is_hex_digit(dev[i])) return false;
  }
  return true;
}

}  // namespace

bool parse_permissions(std::string_view text, Permissions& out) {
  if (text.size() != 4) return false;
  if ((text[0] != 'r' && text[0] != '-') || (text[1] != 'w' && text[1] != '-') ||
      (text[2] != 'x' && text[2] != '-') || (text[3] != 'p' && text[3] != 's')) {
    return false;
  }
  out.readable = text[0] == 'r';
  out.writable = text[1] == 'w';
  out.executable = text[2] == 'x';
  out.shared = text[3] == 's';
  return true;
}

std::string to_string(const Permissions& perms) {
  std::string s(4, '-');
  if (perms.readable) s[0] = 'r';
  if (perms.writable) s[1] = 'w';
  if (perms.executable) s[2] = 'x';
  s[3] = perms.shared ? 's' : 'p';
  return s;
}

const char* to_string(MapsField field) {
  switch (field) {
    case MapsField::kAddressPair: return "address pair";
    case MapsField::kPerms: return "perms";
    case MapsField::kOffset: return "offset";
    case MapsField::kDevice: return "dev";
    case MapsField::kInode: return "inode";
  }
  return "unknown";
}

MapsParseError::MapsParseError(std::string line, MapsField field,
                               std::size_t line_number)
    : std::runtime_error(
          (line_number ? "maps line " + std::to_string(line_number) + ": "
                       : std::string("maps line: ")) +
          "malformed " + to_string(field) + " in '" + line + "'"),
      line_(std::move(line)),
      field_(field),
      line_number_(line_number) {}

MemoryRegion parse_maps_line(std::string_view line) {
  auto fail = [&](MapsField field) {
    return MapsParseError(std::string(line), field, 0);
  };

  MemoryRegion region;
  std::string_view rest = line;

  std::string_view range = next_token(rest);
  auto dash = range.find('-');
  if (dash == std::string_view::npos ||
      !parse_number(range.substr(0, dash), 16, region.start_addr) ||
      !parse_number(range.substr(dash + 1), 16, region.end_addr) ||
      region.start_addr >= region.end_addr) {
    throw fail(MapsField::kAddressPair);
  }

  if (!parse_permissions(next_token(rest), region.perms)) {
    throw fail(MapsField::kPerms);
  }

  if (!parse_number(next_token(rest), 16, region.offset)) {
    throw fail(MapsField::kOffset);
  }

  std::string_view dev = next_token(rest);
  if (!valid_device(dev)) throw fail(MapsField::kDevice);
  region.device = std::string(dev);

  std::string_view inode = next_token(rest);
  if (!parse_number(inode, 10, region.inode)) throw fail(MapsField::kInode);

  // The path keeps interior and trailing blanks; only the separator goes.
  std::size_t i = 0;
  while (i < rest.size() && is_space(rest[i])) ++i;
  region.path = std::string(rest.substr(i));
  return region;
}

std::vector<MemoryRegion> parse_maps(std::string_view document) {
  std::vector<MemoryRegion> regions;
  std::size_t line_number = 0;
  while (!document.empty()) {
    ++line_number;
    auto nl = document.find('\n');
    std::string_view line = document.substr(0, nl);
    document.remove_prefix(nl == std::string_view::npos ? document.size()
                                                        : nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    try {
      regions.push_back(parse_maps_line(line));
    } catch (const MapsParseError& e) {
      throw MapsParseError(e.line(), e.field(), line_number);
    }
  }
  return regions;
}

std::string render_maps_line(const MemoryRegion& region) {
  char head[128];
  std::snprintf(head, sizeof head, "%08llx-%08llx %s %08llx ",
                static_cast<unsigned long long>(region.start_addr),
                static_cast<unsigned long long>(region.end_addr),
                to_string(region.perms).c_str(),
                static_cast<unsigned long long>(region.offset));
  std::string out = head;
  out += region.device;
  out += ' ';
  out += std::to_string(region.inode);
  if (!region.path.empty()) {
    out += ' ';
    out += region.path;
  }
  return out;
}

std::string render_maps(const std::vector<MemoryRegion>& regions) {
  std::string out;
  for (const auto& region : regions) {
    out += render_maps_line(region);
    out += '\n';
  }
  return out;
}

bool has_deleted_backing(const MemoryRegion& region) {
  const std::string& p = region.path;
  return p.size() >= kDeletedSuffix.size() &&
         std::string_view(p).substr(p.size() - kDeletedSuffix.size()) ==
             kDeletedSuffix;
}

bool is_special_region(const MemoryRegion& region) {
  const std::string& p = region.path;
  if (p.empty()) return true;
  if (p.front() == '[' && p.back() == ']') return true;
  return has_deleted_backing(region);
}

bool is_hashable_region(const MemoryRegion& region) {
  return region.perms.readable && region.perms.executable &&
         !is_special_region(region);
}

RegionClass classify_region(const MemoryRegion& region) {
  if (is_special_region(region)) return RegionClass::kSpecial;
  if (!region.perms.readable || !region.perms.executable) {
    return RegionClass::kNotExecutable;
  }
  return RegionClass::kHashable;
}

}  // namespace hids
