#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "hids/host.hpp"

namespace hids {

enum class FindingCode {
  kUsbUnauthorized,
  kUsbDisabled,
  kUsbDisableFailed,
  kModuleUnknown,
  kModuleHashMismatch,
  kModuleUpdateWhitelisted,  // hash changed, but path is a known update
  kProcessUnknown,
  kModuleDeletedBacking,
  kBaselineSealInvalid,
  kWeakKeyWarning,
  kScanError,  // a host read failed; the sweep went on without it
};

inline constexpr FindingCode kAllFindingCodes[] = {
    FindingCode::kUsbUnauthorized,      FindingCode::kUsbDisabled,
    FindingCode::kUsbDisableFailed,     FindingCode::kModuleUnknown,
    FindingCode::kModuleHashMismatch,   FindingCode::kModuleUpdateWhitelisted,
    FindingCode::kProcessUnknown,       FindingCode::kModuleDeletedBacking,
    FindingCode::kBaselineSealInvalid,  FindingCode::kWeakKeyWarning,
    FindingCode::kScanError,
};

enum class Severity { kInfo = 0, kWarn = 1, kAlert = 2 };

const char* to_string(FindingCode code);
const char* to_string(Severity severity);
std::optional<FindingCode> parse_finding_code(std::string_view text);

// Fixed mapping; every finding of a code carries this severity.
Severity severity_of(FindingCode code);

struct Finding {
  FindingCode code = FindingCode::kScanError;
  Severity severity = Severity::kWarn;
  std::string subject;  // "process:/module/path", process name or device id
  std::string detail;
  TimeMs at_ms = 0;

  bool operator==(const Finding&) const = default;
};

Finding make_finding(FindingCode code, std::string subject, std::string detail,
                     TimeMs at_ms);

}  // namespace hids
