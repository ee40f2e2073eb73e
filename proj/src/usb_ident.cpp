#include "hids/usb_ident.hpp"

#include <cstdio>

#include "hids/sealed_document.hpp"

namespace hids {

namespace {

constexpr std::string_view kAllowHeader = "HIDSALLOW 1";

void append_escaped(std::string& out, std::string_view field) {
  for (char c : field) {
    if (c == ':' || c == '\\') out += '\\';
    out += c;
  }
}

std::string describe(const UsbDeviceDescriptor& d) {
  char ids[16];
  std::snprintf(ids, sizeof ids, "%04x:%04x", d.vendor_id, d.product_id);
  return std::string(ids) + " serial=\"" + d.serial_number + "\" product=\"" +
         d.product_name + "\" bus=" + d.bus_ref.value;
}

}  // namespace

std::string canonical_device_string(const UsbDeviceDescriptor& desc) {
  char ids[16];
  std::snprintf(ids, sizeof ids, "%04x:%04x:", desc.vendor_id, desc.product_id);
  std::string out = ids;
  append_escaped(out, desc.serial_number);
  out += ':';
  append_escaped(out, desc.product_name);
  return out;
}

DeviceId generate_device_id(const UsbDeviceDescriptor& desc) {
  return {HashHex::of_digest(sha256(canonical_device_string(desc)))};
}

std::string serialize_allowlist(const AllowList& list, const SealKey& key) {
  std::string body(kAllowHeader);
  body += '\n';
  for (const auto& id : list.entries) {
    body += "device\t";
    body += id.value.str();
    body += '\n';
  }
  return seal_document(body, key);
}

AllowList deserialize_allowlist(std::string_view document, const SealKey& key) {
  std::string_view body = open_sealed_document(document, key);
  AllowList list;
  std::size_t line_number = 0;
  auto format_error = [&](const std::string& what) {
    return StoreError(StoreErrorCode::kFormatError,
                      "FORMAT_ERROR: line " + std::to_string(line_number) +
                          ": " + what,
                      line_number);
  };
  while (!body.empty()) {
    ++line_number;
    auto nl = body.find('\n');
    std::string_view line = body.substr(0, nl);
    body.remove_prefix(nl + 1);
    if (line_number == 1) {
      if (line != kAllowHeader) throw format_error("expected 'HIDSALLOW 1'");
      continue;
    }
    constexpr std::string_view kPrefix = "device\t";
    if (line.substr(0, kPrefix.size()) != kPrefix) {
      throw format_error("expected a device record");
    }
    auto id = HashHex::parse(line.substr(kPrefix.size()));
    if (!id) throw format_error("device id is not 64 lowercase hex chars");
    if (!list.entries.insert(DeviceId{*id}).second) {
      throw format_error("duplicate device id");
    }
  }
  if (line_number == 0) {
    ++line_number;
    throw format_error("missing header");
  }
  return list;
}

std::vector<Finding> UsbGuard::poll(Host& host) {
  std::vector<Finding> findings;
  const auto devices = host.list_usb_devices();
  std::set<DeviceId> present;
  for (const auto& dev : devices) {
    DeviceId id = generate_device_id(dev);
    if (allow_.contains(id)) continue;
    present.insert(id);
    const std::string& subject = id.value.str();
    if (alerted_.insert(id).second) {
      findings.push_back(make_finding(FindingCode::kUsbUnauthorized, subject,
                                      describe(dev), host.now_ms()));
    }
    DetachResult result = host.detach_device(dev.bus_ref);
    if (result.status == DetachStatus::kFailed) {
      findings.push_back(make_finding(FindingCode::kUsbDisableFailed, subject,
                                      result.detail, host.now_ms()));
    } else {
      findings.push_back(make_finding(FindingCode::kUsbDisabled, subject,
                                      result.detail.empty() ? "detached"
                                                            : result.detail,
                                      host.now_ms()));
    }
  }
  // Forget devices that are gone so a re-insertion alerts again.
  std::erase_if(alerted_, [&](const DeviceId& id) { return !present.count(id); });
  return findings;
}

std::vector<Finding> check_usb(Host& host, const AllowList& allow) {
  UsbGuard guard(allow);
  return guard.poll(host);
}

}  // namespace hids
