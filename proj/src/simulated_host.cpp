#include "hids/simulated_host.hpp"

#include <algorithm>
#include <tuple>

namespace hids {

const char* to_string(HostErrorCode code) {
  switch (code) {
    case HostErrorCode::kHostUnavailable: return "host-unavailable";
    case HostErrorCode::kNoSuchProcess: return "no-such-process";
    case HostErrorCode::kPermissionDenied: return "permission-denied";
    case HostErrorCode::kOutOfRange: return "out-of-range";
    case HostErrorCode::kNoSuchDevice: return "no-such-device";
  }
  return "unknown";
}

const char* to_string(PayloadState state) {
  switch (state) {
    case PayloadState::kNone: return "none";
    case PayloadState::kPending: return "pending";
    case PayloadState::kFired: return "fired";
    case PayloadState::kCancelled: return "cancelled";
  }
  return "unknown";
}

namespace {

bool overlaps(const MemoryRegion& a, std::uint64_t start, std::uint64_t end) {
  return start < a.end_addr && a.start_addr < end;
}

}  // namespace

SimulatedHost::SimulatedHost(const HostFixture& fixture) {
  validate_fixture(fixture);
  now_ = fixture.clock_start_ms;
  for (const auto& p : fixture.processes) {
    Process proc;
    proc.record = {p.pid, p.name};
    for (const auto& m : p.modules) {
      proc.regions.push_back({region_of(m), materialize_content(m)});
    }
    processes_.emplace(p.pid, std::move(proc));
  }
  for (const auto& d : fixture.usb_devices) add_device_locked(d);
  advance_locked(now_);
}

void SimulatedHost::add_device_locked(const FixtureUsbDevice& d) {
  Device dev;
  dev.descriptor.vendor_id = d.vendor_id;
  dev.descriptor.product_id = d.product_id;
  dev.descriptor.serial_number = d.serial;
  dev.descriptor.product_name = d.product;
  dev.descriptor.bus_ref = {"sim-usb-" + std::to_string(devices_.size())};
  dev.inserted_at = d.inserted_at_ms.value_or(now_);
  dev.fires_at = dev.inserted_at + d.autorun_delay_ms;
  dev.payload = d.payload;
  dev.state = d.payload ? PayloadState::kPending : PayloadState::kNone;
  devices_.push_back(std::move(dev));
}

std::vector<ProcessRecord> SimulatedHost::list_processes() {
  std::lock_guard lock(mutex_);
  std::vector<ProcessRecord> out;
  out.reserve(processes_.size());
  for (const auto& [pid, proc] : processes_) out.push_back(proc.record);
  return out;
}

const SimulatedHost::Process& SimulatedHost::process_locked(Pid pid) const {
  auto it = processes_.find(pid);
  if (it == processes_.end()) {
    throw HostError(HostErrorCode::kNoSuchProcess,
                    "no such process: " + std::to_string(pid));
  }
  return it->second;
}

SimulatedHost::Process& SimulatedHost::process_locked(Pid pid) {
  return const_cast<Process&>(std::as_const(*this).process_locked(pid));
}

std::string SimulatedHost::read_maps(Pid pid) {
  std::lock_guard lock(mutex_);
  std::string out;
  for (const auto& region : process_locked(pid).regions) {
    out += render_maps_line(region.meta);
    out += '\n';
  }
  return out;
}

Bytes SimulatedHost::read_mem(Pid pid, std::uint64_t start_addr,
                              std::uint64_t length) {
  std::lock_guard lock(mutex_);
  const Process& proc = process_locked(pid);
  if (length == 0) return {};
  for (const auto& region : proc.regions) {
    const auto& m = region.meta;
    if (start_addr < m.start_addr || start_addr >= m.end_addr) continue;
    if (length > m.end_addr - start_addr) {
      throw HostError(HostErrorCode::kOutOfRange,
                      "read past end of region " + render_maps_line(m));
    }
    if (!m.perms.readable) {
      throw HostError(HostErrorCode::kPermissionDenied,
                      "region not readable: " + render_maps_line(m));
    }
    auto first = region.content.begin() +
                 static_cast<std::ptrdiff_t>(start_addr - m.start_addr);
    return Bytes(first, first + static_cast<std::ptrdiff_t>(length));
  }
  throw HostError(HostErrorCode::kOutOfRange,
                  "address not mapped in pid " + std::to_string(pid));
}

std::vector<UsbDeviceDescriptor> SimulatedHost::list_usb_devices() {
  std::lock_guard lock(mutex_);
  std::vector<UsbDeviceDescriptor> out;
  for (const auto& d : devices_) {
    if (!d.detached && d.inserted_at <= now_) out.push_back(d.descriptor);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.vendor_id, a.product_id, a.serial_number) <
           std::tie(b.vendor_id, b.product_id, b.serial_number);
  });
  return out;
}

const SimulatedHost::Device* SimulatedHost::device_locked(
    const BusRef& ref) const {
  for (const auto& d : devices_) {
    if (d.descriptor.bus_ref == ref) return &d;
  }
  return nullptr;
}

DetachResult SimulatedHost::detach_device(const BusRef& ref) {
  std::lock_guard lock(mutex_);
  auto* dev = const_cast<Device*>(device_locked(ref));
  if (dev == nullptr || dev->inserted_at > now_) {
    return {DetachStatus::kFailed, "no attached device " + ref.value};
  }
  if (dev->detached) {
    return {DetachStatus::kAlreadyDetached, ref.value + " already detached"};
  }
  dev->detached = true;
  // Payloads due at or before now_ have already fired in advance_locked().
  if (dev->state == PayloadState::kPending) {
    dev->state = PayloadState::kCancelled;
    return {DetachStatus::kDetached, "payload cancelled"};
  }
  return {DetachStatus::kDetached, ""};
}

TimeMs SimulatedHost::now_ms() {
  std::lock_guard lock(mutex_);
  return now_;
}

void SimulatedHost::sleep_until(TimeMs t) {
  std::lock_guard lock(mutex_);
  advance_locked(t);
}

void SimulatedHost::advance_time(TimeMs delta_ms) {
  std::lock_guard lock(mutex_);
  if (delta_ms > 0) advance_locked(now_ + delta_ms);
}

void SimulatedHost::advance_locked(TimeMs t) {
  if (t < now_) return;
  // Fire everything due by t, earliest first; ties by insertion order.
  std::vector<std::size_t> due;
  for (std::size_t i = 0; i < devices_.size(); ++i) {
    const auto& d = devices_[i];
    if (d.state == PayloadState::kPending && d.fires_at <= t) due.push_back(i);
  }
  std::stable_sort(due.begin(), due.end(), [&](std::size_t a, std::size_t b) {
    return devices_[a].fires_at < devices_[b].fires_at;
  });
  for (std::size_t i : due) {
    now_ = std::max(now_, devices_[i].fires_at);
    fire_locked(devices_[i]);
  }
  now_ = t;
}

void SimulatedHost::fire_locked(Device& device) {
  device.state = PayloadState::kFired;
  const UsbPayload& payload = *device.payload;

  Process* target = nullptr;
  for (auto& [pid, proc] : processes_) {
    if (proc.record.name == payload.target) {
      target = &proc;
      break;
    }
  }
  if (target == nullptr) {
    if (!payload.spawn_pid || processes_.count(*payload.spawn_pid)) return;
    Process proc;
    proc.record = {*payload.spawn_pid, payload.target};
    target = &processes_.emplace(*payload.spawn_pid, std::move(proc)).first->second;
  }

  // Regions that would collide with an existing mapping are dropped.
  for (const auto& m : payload.modules) {
    bool clash = std::any_of(
        target->regions.begin(), target->regions.end(),
        [&](const Region& r) { return overlaps(r.meta, m.start_addr, m.end_addr); });
    if (!clash) target->regions.push_back({region_of(m), materialize_content(m)});
  }
}

void SimulatedHost::write_mem(Pid pid, std::uint64_t addr,
                              std::span<const std::uint8_t> data) {
  std::lock_guard lock(mutex_);
  Process& proc = process_locked(pid);
  for (auto& region : proc.regions) {
    const auto& m = region.meta;
    if (addr < m.start_addr || addr >= m.end_addr) continue;
    if (data.size() > m.end_addr - addr) {
      throw HostError(HostErrorCode::kOutOfRange, "write past end of region");
    }
    std::copy(data.begin(), data.end(),
              region.content.begin() +
                  static_cast<std::ptrdiff_t>(addr - m.start_addr));
    return;
  }
  throw HostError(HostErrorCode::kOutOfRange, "address not mapped");
}

PayloadState SimulatedHost::payload_state(const BusRef& ref) const {
  std::lock_guard lock(mutex_);
  const Device* dev = device_locked(ref);
  if (dev == nullptr) {
    throw HostError(HostErrorCode::kNoSuchDevice, "unknown device " + ref.value);
  }
  return dev->state;
}

BusRef SimulatedHost::insert_device(const FixtureUsbDevice& device) {
  std::lock_guard lock(mutex_);
  if (device.autorun_delay_ms < 0) {
    throw FixtureError("autorun_delay_ms must be >= 0");
  }
  add_device_locked(device);
  BusRef ref = devices_.back().descriptor.bus_ref;
  advance_locked(now_);
  return ref;
}

std::unique_ptr<SimulatedHost> load_fixture(std::string_view document) {
  return std::make_unique<SimulatedHost>(parse_fixture(document));
}

}  // namespace hids
