#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace hids {

// Backslash-escapes tab, newline and backslash so that a value fits in one
// tab-separated field.
std::string escape_field(std::string_view raw);

// Inverse of escape_field. Rejects dangling or unknown escapes.
std::optional<std::string> unescape_field(std::string_view escaped);

}  // namespace hids
