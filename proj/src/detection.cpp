#include "hids/detection.hpp"

#include <algorithm>
#include <set>

#include "hids/memory_hasher.hpp"
#include "hids/procmaps.hpp"

namespace hids {

const char* to_string(FindingCode code) {
  switch (code) {
    case FindingCode::kUsbUnauthorized: return "USB_UNAUTHORIZED";
    case FindingCode::kUsbDisabled: return "USB_DISABLED";
    case FindingCode::kUsbDisableFailed: return "USB_DISABLE_FAILED";
    case FindingCode::kModuleUnknown: return "MODULE_UNKNOWN";
    case FindingCode::kModuleHashMismatch: return "MODULE_HASH_MISMATCH";
    case FindingCode::kModuleUpdateWhitelisted: return "MODULE_UPDATE_WHITELISTED";
    case FindingCode::kProcessUnknown: return "PROCESS_UNKNOWN";
    case FindingCode::kModuleDeletedBacking: return "MODULE_DELETED_BACKING";
    case FindingCode::kBaselineSealInvalid: return "BASELINE_SEAL_INVALID";
    case FindingCode::kWeakKeyWarning: return "WEAK_KEY_WARNING";
    case FindingCode::kScanError: return "SCAN_ERROR";
  }
  return "UNKNOWN";
}

const char* to_string(Severity severity) {
  switch (severity) {
    case Severity::kInfo: return "INFO";
    case Severity::kWarn: return "WARN";
    case Severity::kAlert: return "ALERT";
  }
  return "UNKNOWN";
}

std::optional<FindingCode> parse_finding_code(std::string_view text) {
  for (FindingCode code : kAllFindingCodes) {
    if (text == to_string(code)) return code;
  }
  return std::nullopt;
}

Severity severity_of(FindingCode code) {
  switch (code) {
    case FindingCode::kModuleHashMismatch:
    case FindingCode::kModuleUnknown:
    case FindingCode::kUsbUnauthorized:
    case FindingCode::kBaselineSealInvalid:
      return Severity::kAlert;
    case FindingCode::kProcessUnknown:
    case FindingCode::kUsbDisableFailed:
    case FindingCode::kModuleDeletedBacking:
    case FindingCode::kScanError:
      return Severity::kWarn;
    case FindingCode::kUsbDisabled:
    case FindingCode::kWeakKeyWarning:
    case FindingCode::kModuleUpdateWhitelisted:
      return Severity::kInfo;
  }
  return Severity::kAlert;
}

Finding make_finding(FindingCode code, std::string subject, std::string detail,
                     TimeMs at_ms) {
  return {code, severity_of(code), std::move(subject), std::move(detail), at_ms};
}

namespace {

std::string pid_detail(const ProcessRecord& proc) {
  return "pid=" + std::to_string(proc.pid);
}

void check_process(Host& host, const Baseline& baseline,
                   const ProcessRecord& proc, std::vector<Finding>& out) {
  auto emit = [&](FindingCode code, std::string subject, std::string detail) {
    out.push_back(make_finding(code, std::move(subject), std::move(detail),
                               host.now_ms()));
  };

  if (!baseline.has_process(proc.name)) {
    emit(FindingCode::kProcessUnknown, proc.name,
         "New process found: " + proc.name + " " + pid_detail(proc));
    return;
  }

  std::vector<MemoryRegion> regions;
  try {
    regions = parse_maps(host.read_maps(proc.pid));
  } catch (const HostError& e) {
    if (e.code() == HostErrorCode::kNoSuchProcess) return;
    emit(FindingCode::kScanError, proc.name, pid_detail(proc) + " " + e.what());
    return;
  } catch (const MapsParseError& e) {
    emit(FindingCode::kScanError, proc.name, pid_detail(proc) + " " + e.what());
    return;
  }

  std::set<std::string> seen;
  for (const auto& region : regions) {
    if (!seen.insert(region.path).second) continue;
    const std::string subject = proc.name + ":" + region.path;
    if (has_deleted_backing(region)) {
      emit(FindingCode::kModuleDeletedBacking, subject,
           pid_detail(proc) + " backing file deleted");
      continue;
    }
    if (is_special_region(region)) continue;

    const HashHex* stored = baseline.module_hash(proc.name, region.path);
    if (stored == nullptr) {
      emit(FindingCode::kModuleUnknown, subject,
           "UNKNOWN MODULE FOUND " + region.path + " in " + proc.name + " " +
               pid_detail(proc));
      continue;
    }

    HashHex live = *stored;
    try {
      live = get_module_hash(read_module_memory(host, proc, regions, region.path));
    } catch (const HostError& e) {
      if (e.code() == HostErrorCode::kNoSuchProcess) return;
      emit(FindingCode::kScanError, subject, pid_detail(proc) + " " + e.what());
      continue;
    }
    if (live == *stored) continue;

    std::string detail = pid_detail(proc) + " expected=" + stored->str() +
                         " actual=" + live.str();
    if (baseline.is_whitelisted(proc.name, region.path)) {
      emit(FindingCode::kModuleUpdateWhitelisted, subject, detail);
    } else {
      emit(FindingCode::kModuleHashMismatch, subject, "FAILED " + detail);
    }
  }
}

}  // namespace

std::vector<Finding> check_processes(Host& host, const Baseline& baseline) {
  std::vector<Finding> findings;
  for (const ProcessRecord& proc : host.list_processes()) {
    check_process(host, baseline, proc, findings);
  }
  return findings;
}

int ScanReport::exit_code() const {
  return max_severity && *max_severity >= Severity::kWarn ? 1 : 0;
}

std::size_t ScanReport::count(FindingCode code) const {
  auto it = counts.find(code);
  return it == counts.end() ? 0 : it->second;
}

ScanReport summarize(const std::vector<Finding>& findings, TimeMs duration_ms) {
  ScanReport report;
  report.duration_ms = duration_ms;
  for (const auto& f : findings) {
    ++report.counts[f.code];
    if (!report.max_severity || f.severity > *report.max_severity) {
      report.max_severity = f.severity;
    }
  }
  return report;
}

}  // namespace hids
