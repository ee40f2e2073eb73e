#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hids {

using Pid = std::int64_t;
using TimeMs = std::int64_t;
using Bytes = std::vector<std::uint8_t>;

struct ProcessRecord {
  Pid pid = 0;
  std::string name;

  bool operator==(const ProcessRecord&) const = default;
};

// Opaque handle the host uses to find a device again when detaching it.
struct BusRef {
  std::string value;

  bool operator==(const BusRef&) const = default;
};

struct UsbDeviceDescriptor {
  std::uint16_t vendor_id = 0;
  std::uint16_t product_id = 0;
  std::string serial_number;
  std::string product_name;
  BusRef bus_ref;

  bool operator==(const UsbDeviceDescriptor&) const = default;
};

enum class HostErrorCode {
  kHostUnavailable,
  kNoSuchProcess,
  kPermissionDenied,
  kOutOfRange,
  kNoSuchDevice,
};

const char* to_string(HostErrorCode code);

class HostError : public std::runtime_error {
 public:
  HostError(HostErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  HostErrorCode code() const noexcept { return code_; }

 private:
  HostErrorCode code_;
};

enum class DetachStatus {
  kDetached,
  kAlreadyDetached,
  kFailed,
};

struct DetachResult {
  DetachStatus status = DetachStatus::kFailed;
  std::string detail;
};

// Everything the detector touches on a machine goes through this interface.
// Implementations must be safe to call from several threads.
class Host {
 public:
  virtual ~Host() = default;

  // Running processes, ascending by pid.
  virtual std::vector<ProcessRecord> list_processes() = 0;

  // The procfs maps document of `pid`.
  virtual std::string read_maps(Pid pid) = 0;

  // Exactly `length` bytes starting at `start_addr`, or HostError.
  virtual Bytes read_mem(Pid pid, std::uint64_t start_addr,
                         std::uint64_t length) = 0;

  // Attached devices, ordered by (vendor_id, product_id, serial_number).
  virtual std::vector<UsbDeviceDescriptor> list_usb_devices() = 0;

  virtual DetachResult detach_device(const BusRef& ref) = 0;

  virtual TimeMs now_ms() = 0;

  // Blocks (real host) or advances the clock (simulated host) until
  // now_ms() >= t. Never moves time backwards.
  virtual void sleep_until(TimeMs t) = 0;
};

}  // namespace hids
