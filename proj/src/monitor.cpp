#include "hids/monitor.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>

#include "hids/detection.hpp"
#include "hids/escape.hpp"

namespace hids {

namespace {

// Upper bound on one blocking wait so stop requests are seen promptly on a
// real host. The simulated host jumps straight to the target either way.
constexpr TimeMs kMaxSleepSliceMs = 200;

}  // namespace

void validate_config(const MonitorConfig& config) {
  if (config.process_interval_ms < 1) {
    throw std::invalid_argument("process interval must be >= 1 ms");
  }
  if (config.usb_interval_ms < 1) {
    throw std::invalid_argument("usb interval must be >= 1 ms");
  }
  if (config.max_cycles && *config.max_cycles == 0) {
    throw std::invalid_argument("max cycles must be >= 1");
  }
}

std::string iso8601_ms(TimeMs t) {
  TimeMs secs = t >= 0 ? t / 1000 : (t - 999) / 1000;
  int millis = static_cast<int>(t - secs * 1000);
  std::time_t tt = static_cast<std::time_t>(secs);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec, millis);
  return buf;
}

std::string format_alert(const Finding& finding) {
  std::string line = iso8601_ms(finding.at_ms);
  line += '\t';
  line += to_string(finding.severity);
  line += '\t';
  line += to_string(finding.code);
  line += '\t';
  line += escape_field(finding.subject);
  line += '\t';
  line += escape_field(finding.detail);
  return line;
}

std::string format_heartbeat(std::uint64_t cycle, TimeMs at_ms) {
  return iso8601_ms(at_ms) + "\tINFO\tCYCLE\t-\tn=" + std::to_string(cycle);
}

void StreamSink::write_line(const std::string& line) {
  std::lock_guard lock(mutex_);
  std::string full = line + '\n';
  out_.write(full.data(), static_cast<std::streamsize>(full.size()));
  out_.flush();
  if (!out_) throw SinkError("alert sink write failed");
}

void StreamSink::emit(const Finding& finding) { write_line(format_alert(finding)); }

void StreamSink::heartbeat(std::uint64_t cycle, TimeMs at_ms) {
  write_line(format_heartbeat(cycle, at_ms));
}

void MemorySink::emit(const Finding& finding) {
  std::lock_guard lock(mutex_);
  findings_.push_back(finding);
  lines_.push_back(format_alert(finding));
}

void MemorySink::heartbeat(std::uint64_t cycle, TimeMs at_ms) {
  std::lock_guard lock(mutex_);
  lines_.push_back(format_heartbeat(cycle, at_ms));
}

std::vector<Finding> MemorySink::findings() const {
  std::lock_guard lock(mutex_);
  return findings_;
}

std::vector<std::string> MemorySink::lines() const {
  std::lock_guard lock(mutex_);
  return lines_;
}

int MonitorSummary::exit_code() const {
  if (status == MonitorStatus::kSinkError) return 2;
  return max_severity && *max_severity >= Severity::kWarn ? 1 : 0;
}

MonitorSummary run_monitor(Host& host, const Baseline& baseline,
                           const AllowList& allowlist,
                           const MonitorConfig& config, AlertSink& sink,
                           std::stop_token stop) {
  validate_config(config);
  MonitorSummary summary;
  UsbGuard guard(allowlist);

  auto publish = [&](const std::vector<Finding>& findings) {
    for (const auto& f : findings) {
      sink.emit(f);
      ++summary.findings;
      if (!summary.max_severity || f.severity > *summary.max_severity) {
        summary.max_severity = f.severity;
      }
    }
  };
  auto host_error = [&](const std::exception& e) {
    publish({make_finding(FindingCode::kScanError, "-", e.what(), host.now_ms())});
  };

  const TimeMs start = host.now_ms();
  std::uint64_t usb_index = 0;
  std::uint64_t sweep_index = 0;

  try {
    for (;;) {
      if (stop.stop_requested()) {
        summary.status = MonitorStatus::kStopped;
        break;
      }
      const TimeMs next_usb =
          start + static_cast<TimeMs>(usb_index) * config.usb_interval_ms;
      const TimeMs next_sweep =
          start + static_cast<TimeMs>(sweep_index) * config.process_interval_ms;
      const TimeMs due = std::min(next_usb, next_sweep);

      for (TimeMs now = host.now_ms(); now < due && !stop.stop_requested();
           now = host.now_ms()) {
        host.sleep_until(std::min(due, now + kMaxSleepSliceMs));
      }
      if (stop.stop_requested()) {
        summary.status = MonitorStatus::kStopped;
        break;
      }

      if (next_usb == due) {
        ++usb_index;
        ++summary.usb_polls;
        try {
          publish(guard.poll(host));
        } catch (const HostError& e) {
          host_error(e);
        }
        // Slots missed while a slow real-host step ran are dropped, not
        // replayed in a burst.
        while (start + static_cast<TimeMs>(usb_index) * config.usb_interval_ms <
               host.now_ms()) {
          ++usb_index;
        }
      }
      if (next_sweep == due) {
        ++sweep_index;
        try {
          publish(check_processes(host, baseline));
        } catch (const HostError& e) {
          host_error(e);
        }
        while (start + static_cast<TimeMs>(sweep_index) *
                           config.process_interval_ms <
               host.now_ms()) {
          ++sweep_index;
        }
        ++summary.cycles;
        sink.heartbeat(summary.cycles, host.now_ms());
        if (config.max_cycles && summary.cycles >= *config.max_cycles) {
          summary.status = MonitorStatus::kCompleted;
          break;
        }
      }
    }
  } catch (const SinkError& e) {
    summary.status = MonitorStatus::kSinkError;
    summary.error = e.what();
  }
  return summary;
}

}  // namespace hids
