#include "hids/procfs_host.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>
#include <tuple>

namespace hids {

namespace fs = std::filesystem;

namespace {

HostError errno_error(int err, Pid pid, const std::string& what) {
  std::string msg = what + " (pid " + std::to_string(pid) + "): " +
                    std::strerror(err);
  if (err == ENOENT || err == ESRCH) {
    return HostError(HostErrorCode::kNoSuchProcess, msg);
  }
  if (err == EACCES || err == EPERM) {
    return HostError(HostErrorCode::kPermissionDenied, msg);
  }
  return HostError(HostErrorCode::kHostUnavailable, msg);
}

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

std::string read_attribute(const fs::path& path) {
  std::ifstream in(path);
  std::string value;
  std::getline(in, value);
  return value;
}

bool parse_hex16(const std::string& text, std::uint16_t& out) {
  auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), out, 16);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

ProcfsHost::ProcfsHost(fs::path proc_root, fs::path usb_root)
    : proc_root_(std::move(proc_root)), usb_root_(std::move(usb_root)) {}

std::vector<ProcessRecord> ProcfsHost::list_processes() {
  std::error_code ec;
  fs::directory_iterator it(proc_root_, ec);
  if (ec) {
    throw HostError(HostErrorCode::kHostUnavailable,
                    "cannot read " + proc_root_.string() + ": " + ec.message());
  }
  std::vector<ProcessRecord> out;
  for (const auto& entry : it) {
    const std::string name = entry.path().filename().string();
    Pid pid = 0;
    auto [ptr, perr] = std::from_chars(name.data(), name.data() + name.size(), pid);
    if (perr != std::errc() || ptr != name.data() + name.size() || pid <= 0) {
      continue;
    }
    std::string comm = read_attribute(entry.path() / "comm");
    if (comm.empty()) continue;  // exited or kernel oddity
    std::replace_if(
        comm.begin(), comm.end(), [](char c) { return c == '\t' || c == '\n'; },
        '?');
    out.push_back({pid, comm});
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.pid < b.pid; });
  return out;
}

std::string ProcfsHost::read_maps(Pid pid) {
  fs::path path = proc_root_ / std::to_string(pid) / "maps";
  Fd fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
  if (fd.get() < 0) throw errno_error(errno, pid, "open maps");
  std::string out;
  char buf[8192];
  for (;;) {
    ssize_t n = ::read(fd.get(), buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw errno_error(errno, pid, "read maps");
    }
    if (n == 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

Bytes ProcfsHost::read_mem(Pid pid, std::uint64_t start_addr,
                           std::uint64_t length) {
  fs::path path = proc_root_ / std::to_string(pid) / "mem";
  Fd fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
  if (fd.get() < 0) throw errno_error(errno, pid, "open mem");
  Bytes out(length);
  std::uint64_t done = 0;
  while (done < length) {
    ssize_t n = ::pread(fd.get(), out.data() + done, length - done,
                        static_cast<off_t>(start_addr + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EIO) {
        throw HostError(HostErrorCode::kOutOfRange,
                        "unreadable memory in pid " + std::to_string(pid));
      }
      throw errno_error(errno, pid, "read mem");
    }
    if (n == 0) {
      throw HostError(HostErrorCode::kOutOfRange,
                      "short read from pid " + std::to_string(pid));
    }
    done += static_cast<std::uint64_t>(n);
  }
  return out;
}

std::vector<UsbDeviceDescriptor> ProcfsHost::list_usb_devices() {
  std::error_code ec;
  fs::directory_iterator it(usb_root_, ec);
  if (ec) {
    throw HostError(HostErrorCode::kHostUnavailable,
                    "cannot read " + usb_root_.string() + ": " + ec.message());
  }
  std::vector<UsbDeviceDescriptor> out;
  for (const auto& entry : it) {
    const fs::path dir = entry.path();
    if (!fs::exists(dir / "idVendor")) continue;  // interfaces, hubs' ports
    if (read_attribute(dir / "authorized") == "0") continue;
    UsbDeviceDescriptor d;
    if (!parse_hex16(read_attribute(dir / "idVendor"), d.vendor_id) ||
        !parse_hex16(read_attribute(dir / "idProduct"), d.product_id)) {
      continue;
    }
    d.serial_number = read_attribute(dir / "serial");
    d.product_name = read_attribute(dir / "product");
    d.bus_ref = {dir.string()};
    out.push_back(std::move(d));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.vendor_id, a.product_id, a.serial_number, a.bus_ref.value) <
           std::tie(b.vendor_id, b.product_id, b.serial_number, b.bus_ref.value);
  });
  return out;
}

DetachResult ProcfsHost::detach_device(const BusRef& ref) {
  fs::path attr = fs::path(ref.value) / "authorized";
  if (read_attribute(attr) == "0") {
    return {DetachStatus::kAlreadyDetached, ref.value + " already deauthorized"};
  }
  Fd fd(::open(attr.c_str(), O_WRONLY | O_CLOEXEC));
  if (fd.get() < 0 || ::write(fd.get(), "0", 1) != 1) {
    return {DetachStatus::kFailed, attr.string() + ": " + std::strerror(errno)};
  }
  return {DetachStatus::kDetached, ""};
}

TimeMs ProcfsHost::now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch())
      .count();
}

void ProcfsHost::sleep_until(TimeMs t) {
  TimeMs now = now_ms();
  if (t > now) std::this_thread::sleep_for(std::chrono::milliseconds(t - now));
}

}  // namespace hids
