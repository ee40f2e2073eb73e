#pragma once

#include <map>
#include <optional>
#include <vector>

#include "hids/baseline_store.hpp"
#include "hids/finding.hpp"
#include "hids/host.hpp"

namespace hids {

// One sweep of every live process against the baseline.
//
//   unknown process name        -> PROCESS_UNKNOWN, its modules are skipped
//   module path not baselined   -> MODULE_UNKNOWN
//   hash differs                -> MODULE_HASH_MISMATCH, or
//                                  MODULE_UPDATE_WHITELISTED for known updates
//   "(deleted)" backing file    -> MODULE_DELETED_BACKING
//   read failure                -> SCAN_ERROR, sweep continues
//
// Each process is checked against one maps snapshot. Processes that exit
// mid-sweep are skipped silently.
std::vector<Finding> check_processes(Host& host, const Baseline& baseline);

struct ScanReport {
  std::map<FindingCode, std::size_t> counts;
  std::optional<Severity> max_severity;  // empty when there are no findings
  TimeMs duration_ms = 0;

  // 1 when any WARN or ALERT finding is present, otherwise 0.
  int exit_code() const;
  std::size_t count(FindingCode code) const;
};

ScanReport summarize(const std::vector<Finding>& findings, TimeMs duration_ms = 0);

}  // namespace hids
