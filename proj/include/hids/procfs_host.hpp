#pragma once

#include <filesystem>

#include "hids/host.hpp"

namespace hids {

// Live Linux host: processes from /proc, USB devices from sysfs. Detaching
// deauthorizes the device (writes 0 to its `authorized` attribute), which
// unbinds every interface driver. Needs root for anything useful.
class ProcfsHost final : public Host {
 public:
  ProcfsHost(std::filesystem::path proc_root = "/proc",
             std::filesystem::path usb_root = "/sys/bus/usb/devices");

  std::vector<ProcessRecord> list_processes() override;
  std::string read_maps(Pid pid) override;
  Bytes read_mem(Pid pid, std::uint64_t start_addr,
                 std::uint64_t length) override;
  std::vector<UsbDeviceDescriptor> list_usb_devices() override;
  DetachResult detach_device(const BusRef& ref) override;
  TimeMs now_ms() override;
  void sleep_until(TimeMs t) override;

 private:
  std::filesystem::path proc_root_;
  std::filesystem::path usb_root_;
};

}  // namespace hids
