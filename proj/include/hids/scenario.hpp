#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include "hids/fixture.hpp"
#include "hids/usb_ident.hpp"

namespace hids {

// Seeded randomness with platform-independent bounded draws. The engine is
// std::mt19937_64, whose output sequence the standard fixes; bounded values
// use rejection sampling rather than std::uniform_int_distribution, whose
// algorithm varies between standard libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  // Uniform in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi);
  bool coin() { return (next() >> 63) != 0; }

 private:
  std::mt19937_64 engine_;
};

struct GeneratorOptions {
  int min_processes = 1;
  int max_processes = 4;
  int max_libraries = 4;
  std::uint64_t max_region_pages = 4;  // 256-byte pages
  bool special_regions = true;
  bool usb_devices = true;
};

// A plausible SCADA host: unique process names, per-process main binary and
// shared libraries laid out as r--p / r-xp / r--p / rw-p regions, pseudo
// regions ([heap], [stack], [vdso], anonymous), a shared-memory tag file and
// a couple of trusted USB devices. Addresses stay below 0x7f0000000000 so
// injected payloads can be placed above without overlap.
HostFixture generate_fixture(std::uint64_t seed, const GeneratorOptions& options = {});

// Allow-list of every device present in the fixture at its start time.
AllowList allowlist_from(const HostFixture& fixture);

enum class Scenario {
  kUsbInsertion,      // s1
  kDownloadedMalware, // s2
  kUsbBypass,         // s3
};

const char* to_string(Scenario scenario);
std::optional<Scenario> parse_scenario(std::string_view text);  // s1|s2|s3

class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TimingParams {
  TimeMs poll_ms = 100;
  TimeMs autorun_max_ms = 1000;
};

struct ScenarioReport {
  Scenario scenario = Scenario::kUsbInsertion;
  std::uint64_t trials = 0;
  std::uint64_t detected = 0;
  std::uint64_t disabled = 0;  // scenario 1 only
  std::uint64_t seed = 0;
  std::optional<TimingParams> params;  // scenario 1 only
  // Scenario 1: payloads that fired before the detach, and how many of those
  // the following process sweep flagged as MODULE_UNKNOWN.
  std::uint64_t payloads_fired = 0;
  std::uint64_t fired_payloads_caught = 0;

  double detection_rate() const;
  double disable_rate() const;
};

// 1 - poll/(2 * autorun_max): probability that a uniform autorun delay in
// [0, autorun_max) exceeds a uniform poll latency in [0, poll).
double analytic_disable_probability(double poll_ms, double autorun_max_ms);

// Scenario 1. Each trial inserts an unauthorized device at a uniform phase
// within the USB poll period of a running monitor (latency T uniform in
// [0, poll_ms)) with an autorun delay A uniform in [0, autorun_max_ms).
// Disabled means the detach beat the autorun (T < A).
ScenarioReport run_scenario_usb_insertion(std::uint64_t trials, std::uint64_t seed,
                                          TimeMs poll_ms, TimeMs autorun_max_ms);

// Scenario 2. Each trial flips one seeded byte in a hashable region of a
// baselined host and runs one sweep.
ScenarioReport run_scenario_downloaded_malware(std::uint64_t trials,
                                               std::uint64_t seed);

// Scenario 3. Each trial lets a device payload map a new executable module
// into a baselined process before any USB poll, then runs one sweep.
ScenarioReport run_scenario_usb_bypass(std::uint64_t trials, std::uint64_t seed);

ScenarioReport run_scenario(Scenario scenario, std::uint64_t trials,
                            std::uint64_t seed, const TimingParams& params = {});

// Single trials, exposed for tests and negative controls.

enum class MutationTarget {
  kExecutable,  // a hashable region (detectable)
  kWritable,    // a file-backed rw region (excluded from hashing)
};

struct MalwareTrial {
  std::string subject;  // "process:/module/path" of the mutated region
  bool content_changed = false;
  bool detected = false;  // MODULE_HASH_MISMATCH named `subject`
};

// xor_mask 0 writes the original byte back.
MalwareTrial run_malware_trial(const HostFixture& fixture, SeededRng& rng,
                               MutationTarget target, std::uint8_t xor_mask);

enum class InjectionKind {
  kNewModule,     // fresh path into a baselined process
  kExistingPath,  // extra region under a baselined module path
  kNewProcess,    // payload starts a process that was never baselined
};

struct InjectionTrial {
  std::string subject;  // "process:/path" or the new process name
  FindingCode expected = FindingCode::kModuleUnknown;
  bool detected = false;  // a finding with `expected` code named `subject`
};

InjectionTrial run_injection_trial(const HostFixture& fixture, SeededRng& rng,
                                   InjectionKind kind);

// Machine-readable report: canonical JSON, identical for identical runs.
std::string report_to_json(const ScenarioReport& report);

// `s1 USB_INSERTION trials=100 detected=100 disabled=95 ...`
std::string report_summary_line(const ScenarioReport& report);

}  // namespace hids
