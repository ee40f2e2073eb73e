#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <vector>

#include "hids/baseline_store.hpp"
#include "hids/finding.hpp"
#include "hids/host.hpp"
#include "hids/usb_ident.hpp"

namespace hids {

struct MonitorConfig {
  TimeMs process_interval_ms = 5000;
  TimeMs usb_interval_ms = 100;
  std::optional<std::uint64_t> max_cycles;  // process sweeps; unset = forever
  std::string alert_path = "-";             // "-" is standard output
};

// Throws std::invalid_argument on intervals below 1 ms or max_cycles of 0.
void validate_config(const MonitorConfig& config);

// `2024-01-02T03:04:05.678Z` (UTC, millisecond precision).
std::string iso8601_ms(TimeMs t);

// `<iso8601-ms>\t<severity>\t<code>\t<subject>\t<detail>`, no newline;
// subject and detail are escaped so the line never splits.
std::string format_alert(const Finding& finding);

// `<iso8601-ms>\tINFO\tCYCLE\t-\tn=<cycle>`
std::string format_heartbeat(std::uint64_t cycle, TimeMs at_ms);

class SinkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Append-only destination for alert lines. Implementations serialize
// concurrent writers and never emit half a line.
class AlertSink {
 public:
  virtual ~AlertSink() = default;
  virtual void emit(const Finding& finding) = 0;
  virtual void heartbeat(std::uint64_t cycle, TimeMs at_ms) = 0;
};

class StreamSink final : public AlertSink {
 public:
  explicit StreamSink(std::ostream& out) : out_(out) {}

  void emit(const Finding& finding) override;
  void heartbeat(std::uint64_t cycle, TimeMs at_ms) override;

 private:
  void write_line(const std::string& line);

  std::mutex mutex_;
  std::ostream& out_;
};

// Keeps everything in memory; used by the scenario simulator and tests.
class MemorySink final : public AlertSink {
 public:
  void emit(const Finding& finding) override;
  void heartbeat(std::uint64_t cycle, TimeMs at_ms) override;

  std::vector<Finding> findings() const;
  std::vector<std::string> lines() const;

 private:
  mutable std::mutex mutex_;
  std::vector<Finding> findings_;
  std::vector<std::string> lines_;
};

enum class MonitorStatus {
  kCompleted,  // max_cycles reached
  kStopped,    // stop requested
  kSinkError,
};

struct MonitorSummary {
  MonitorStatus status = MonitorStatus::kCompleted;
  std::uint64_t cycles = 0;
  std::uint64_t usb_polls = 0;
  std::size_t findings = 0;
  std::optional<Severity> max_severity;
  std::string error;

  // 2 on sink failure, 1 if any WARN/ALERT finding was written, else 0.
  int exit_code() const;
};

// Polls USB every usb_interval_ms and sweeps processes every
// process_interval_ms, both scheduled on the host clock from the time of the
// call: poll k happens at start + k * interval. When both are due the USB
// poll runs first. A stop request is honoured between steps, so an active
// sweep always finishes.
MonitorSummary run_monitor(Host& host, const Baseline& baseline,
                           const AllowList& allowlist,
                           const MonitorConfig& config, AlertSink& sink,
                           std::stop_token stop = {});

}  // namespace hids
