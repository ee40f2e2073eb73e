#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hids/host.hpp"
#include "hids/procmaps.hpp"

namespace hids {

// Module content given as literal bytes.
struct LiteralContent {
  Bytes bytes;

  bool operator==(const LiteralContent&) const = default;
};

// Module content produced by generate_content(seed, length).
struct GeneratedContent {
  std::uint64_t seed = 0;
  std::uint64_t length = 0;

  bool operator==(const GeneratedContent&) const = default;
};

// Absent content means an all-zero region. Shorter content is zero-padded up
// to the region size.
using ContentSpec = std::variant<std::monostate, LiteralContent, GeneratedContent>;

// Deterministic filler: the SplitMix64 output sequence started at `seed`,
// each 64-bit word emitted little-endian, truncated to `length` bytes.
//   state += 0x9e3779b97f4a7c15
//   z = state; z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9
//   z = (z ^ (z >> 27)) * 0x94d049bb133111eb; word = z ^ (z >> 31)
Bytes generate_content(std::uint64_t seed, std::uint64_t length);

struct FixtureModule {
  std::string path;
  Permissions perms;
  std::uint64_t start_addr = 0;
  std::uint64_t end_addr = 0;
  ContentSpec content;

  bool operator==(const FixtureModule&) const = default;
};

struct FixtureProcess {
  std::string name;
  Pid pid = 0;
  std::vector<FixtureModule> modules;

  bool operator==(const FixtureProcess&) const = default;
};

// What a device's autorun does when it fires: map `modules` into the
// lowest-pid live process named `target`. When no such process exists and
// `spawn_pid` is set, a new process (target, spawn_pid) is started instead.
struct UsbPayload {
  std::string target;
  std::optional<Pid> spawn_pid;
  std::vector<FixtureModule> modules;

  bool operator==(const UsbPayload&) const = default;
};

struct FixtureUsbDevice {
  std::uint16_t vendor_id = 0;
  std::uint16_t product_id = 0;
  std::string serial;
  std::string product;
  std::optional<TimeMs> inserted_at_ms;  // defaults to clock_start_ms
  TimeMs autorun_delay_ms = 0;
  std::optional<UsbPayload> payload;

  bool operator==(const FixtureUsbDevice&) const = default;
};

struct HostFixture {
  std::vector<FixtureProcess> processes;
  std::vector<FixtureUsbDevice> usb_devices;
  TimeMs clock_start_ms = 0;

  bool operator==(const HostFixture&) const = default;
};

class FixtureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parses and validates a fixture document. Unknown fields, duplicate pids,
// overlapping or inverted regions and oversized content are rejected with
// a FixtureError naming the offending location.
HostFixture parse_fixture(std::string_view document);

// Validation only; parse_fixture already calls this.
void validate_fixture(const HostFixture& fixture);

// Canonical JSON rendering (two-space indent, trailing newline).
std::string fixture_to_json(const HostFixture& fixture);

// Full region content, zero-padded to the region size.
Bytes materialize_content(const FixtureModule& module);

MemoryRegion region_of(const FixtureModule& module);

}  // namespace hids
