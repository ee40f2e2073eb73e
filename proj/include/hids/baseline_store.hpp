#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hids/crypto.hpp"
#include "hids/host.hpp"
#include "hids/memory_hasher.hpp"
#include "hids/sealed_document.hpp"

namespace hids {

struct ProcessBaseline {
  std::map<std::string, HashHex> module_hashes;  // by module path
  std::set<std::string> update_whitelist;        // module paths

  bool operator==(const ProcessBaseline&) const = default;
};

// Setup-phase snapshot, keyed by process name. Immutable once built.
class Baseline {
 public:
  // Keeps the first hash recorded for a (process, module) pair.
  void add_module(const std::string& process, const std::string& module_path,
                  const HashHex& hash);
  void add_process(const std::string& process);
  void whitelist_update(const std::string& process,
                        const std::string& module_path);

  bool has_process(const std::string& process) const;
  const ProcessBaseline* find(const std::string& process) const;
  const HashHex* module_hash(const std::string& process,
                             const std::string& module_path) const;
  bool is_whitelisted(const std::string& process,
                      const std::string& module_path) const;

  // Sorted module paths of one process; empty if the process is unknown.
  std::vector<std::string> module_paths(const std::string& process) const;

  const std::map<std::string, ProcessBaseline>& processes() const {
    return processes_;
  }

  TimeMs created_at_ms = 0;

  // Content equality; the creation time is not part of the sealed format.
  bool operator==(const Baseline& other) const {
    return processes_ == other.processes_;
  }

 private:
  std::map<std::string, ProcessBaseline> processes_;
};

struct SetupResult {
  Baseline baseline;
  std::vector<std::string> log;       // "New process found: <name>"
  std::vector<std::string> warnings;  // per-process read failures
};

// Enrolls every running process: each non-special module path is recorded
// with the SHA-256 of its hashable regions. Read failures become warnings.
SetupResult run_setup(Host& host);

// Sealed canonical text:
//   HIDSBASE 1
//   process\t<name>
//   module\t<path>\t<sha256>     (ascending path)
//   whitelist\t<path>            (ascending, after the modules)
//   seal\t<hmac-sha256 over everything above>
// Processes ascend by name; names and paths escape \t, \n and \\.
std::string serialize_baseline(const Baseline& baseline, const SealKey& key);

// Verifies the seal first (StoreError kSealInvalid), then parses strictly
// canonical content (kFormatError with the 1-based line number).
Baseline deserialize_baseline(std::string_view document, const SealKey& key);

}  // namespace hids
