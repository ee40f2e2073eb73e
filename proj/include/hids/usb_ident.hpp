#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hids/crypto.hpp"
#include "hids/finding.hpp"
#include "hids/host.hpp"
#include "hids/memory_hasher.hpp"

namespace hids {

// SHA-256 of the canonical identity string; opaque allow-list key.
struct DeviceId {
  HashHex value;

  auto operator<=>(const DeviceId&) const = default;
};

// `vvvv:pppp:serial:product`, ids as 4 lowercase hex digits, ':' and '\' in
// serial and product escaped with a backslash.
std::string canonical_device_string(const UsbDeviceDescriptor& desc);

DeviceId generate_device_id(const UsbDeviceDescriptor& desc);

struct AllowList {
  std::set<DeviceId> entries;
  std::string source_path;

  bool contains(const DeviceId& id) const { return entries.count(id) != 0; }
};

// Sealed text: `HIDSALLOW 1`, one `device\t<id>` line per entry in ascending
// order, then the seal line.
std::string serialize_allowlist(const AllowList& list, const SealKey& key);

// Throws StoreError (kSealInvalid before any parsing, then kFormatError).
AllowList deserialize_allowlist(std::string_view document, const SealKey& key);

// Stateful enforcement across poll cycles. An unauthorized device raises
// USB_UNAUTHORIZED once while it stays attached; every poll retries the
// detach and reports USB_DISABLED or USB_DISABLE_FAILED. A device that
// leaves and comes back alerts again. Allowed devices are never touched.
class UsbGuard {
 public:
  explicit UsbGuard(AllowList allow) : allow_(std::move(allow)) {}

  std::vector<Finding> poll(Host& host);

  const AllowList& allowlist() const { return allow_; }

 private:
  AllowList allow_;
  std::set<DeviceId> alerted_;
};

// A single stateless enforcement pass.
std::vector<Finding> check_usb(Host& host, const AllowList& allow);

}  // namespace hids
