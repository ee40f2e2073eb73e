#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

#include "hids/fixture.hpp"
#include "hids/host.hpp"

namespace hids {

enum class PayloadState {
  kNone,       // device carries no payload
  kPending,    // autorun has not fired yet
  kFired,      // payload was injected
  kCancelled,  // device was detached before the autorun instant
};

const char* to_string(PayloadState state);

// Deterministic in-memory host driven by a HostFixture.
//
// The clock only moves through sleep_until()/advance_time(). A device becomes
// visible at its insertion time; its payload fires at insertion time plus
// autorun delay unless the device was detached strictly before that instant.
// Maps documents list regions in fixture order, injected regions appended.
class SimulatedHost final : public Host {
 public:
  explicit SimulatedHost(const HostFixture& fixture);

  std::vector<ProcessRecord> list_processes() override;
  std::string read_maps(Pid pid) override;
  Bytes read_mem(Pid pid, std::uint64_t start_addr,
                 std::uint64_t length) override;
  std::vector<UsbDeviceDescriptor> list_usb_devices() override;
  DetachResult detach_device(const BusRef& ref) override;
  TimeMs now_ms() override;
  void sleep_until(TimeMs t) override;

  void advance_time(TimeMs delta_ms);

  // Overwrites memory inside one region, ignoring its permissions. Used to
  // stage in-memory tampering.
  void write_mem(Pid pid, std::uint64_t addr, std::span<const std::uint8_t> data);

  PayloadState payload_state(const BusRef& ref) const;

  // Plugs in a device at runtime and returns its bus reference.
  BusRef insert_device(const FixtureUsbDevice& device);

 private:
  struct Region {
    MemoryRegion meta;
    Bytes content;
  };
  struct Process {
    ProcessRecord record;
    std::vector<Region> regions;
  };
  struct Device {
    UsbDeviceDescriptor descriptor;
    TimeMs inserted_at = 0;
    TimeMs fires_at = 0;
    std::optional<UsbPayload> payload;
    bool detached = false;
    PayloadState state = PayloadState::kNone;
  };

  void add_device_locked(const FixtureUsbDevice& device);
  void advance_locked(TimeMs t);
  void fire_locked(Device& device);
  const Process& process_locked(Pid pid) const;
  Process& process_locked(Pid pid);
  const Device* device_locked(const BusRef& ref) const;

  mutable std::mutex mutex_;
  TimeMs now_ = 0;
  std::map<Pid, Process> processes_;
  std::vector<Device> devices_;
};

// Parses, validates and instantiates a fixture document. Identical documents
// yield hosts with identical behaviour.
std::unique_ptr<SimulatedHost> load_fixture(std::string_view document);

}  // namespace hids
