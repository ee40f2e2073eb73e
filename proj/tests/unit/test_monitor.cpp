#include <doctest.h>

#include <algorithm>
#include <functional>
#include <sstream>
#include <thread>

#include "hids/baseline_store.hpp"
#include "hids/monitor.hpp"
#include "hids/scenario.hpp"
#include "hids/simulated_host.hpp"
#include "support/test_util.hpp"

using namespace hids;

namespace {

// Records the clock at every USB poll and process sweep.
class RecordingHost final : public Host {
 public:
  explicit RecordingHost(const HostFixture& f) : inner(f) {}
  std::vector<ProcessRecord> list_processes() override {
    events.emplace_back('P', inner.now_ms());
    if (on_sweep) on_sweep();
    return inner.list_processes();
  }
  std::string read_maps(Pid pid) override { return inner.read_maps(pid); }
  Bytes read_mem(Pid pid, std::uint64_t a, std::uint64_t n) override {
    return inner.read_mem(pid, a, n);
  }
  std::vector<UsbDeviceDescriptor> list_usb_devices() override {
    events.emplace_back('U', inner.now_ms());
    return inner.list_usb_devices();
  }
  DetachResult detach_device(const BusRef& ref) override {
    return inner.detach_device(ref);
  }
  TimeMs now_ms() override { return inner.now_ms(); }
  void sleep_until(TimeMs t) override { inner.sleep_until(t); }

  SimulatedHost inner;
  std::vector<std::pair<char, TimeMs>> events;
  std::function<void()> on_sweep;
};

class BrokenSink final : public AlertSink {
 public:
  void emit(const Finding&) override { throw SinkError("disk full"); }
  void heartbeat(std::uint64_t, TimeMs) override { throw SinkError("disk full"); }
};

FixtureUsbDevice stick(TimeMs inserted_at) {
  FixtureUsbDevice d;
  d.vendor_id = 0x0781;
  d.product_id = 0x5567;
  d.serial = "4C53";
  d.product = "Cruzer Blade";
  d.inserted_at_ms = inserted_at;
  return d;
}

Baseline baseline_of(const HostFixture& f) {
  SimulatedHost host(f);
  return run_setup(host).baseline;
}

}  // namespace

TEST_SUITE("monitor") {

TEST_CASE("timestamps and alert lines") {
  CHECK(iso8601_ms(0) == "1970-01-01T00:00:00.000Z");
  CHECK(iso8601_ms(1704164645678) == "2024-01-02T03:04:05.678Z");
  CHECK(iso8601_ms(-1) == "1969-12-31T23:59:59.999Z");
  auto f = make_finding(FindingCode::kModuleUnknown, "rtu:/tmp/payload.so",
                        "UNKNOWN MODULE FOUND /tmp/payload.so", 0);
  CHECK(format_alert(f) ==
        "1970-01-01T00:00:00.000Z\tALERT\tMODULE_UNKNOWN\trtu:/tmp/payload.so\t"
        "UNKNOWN MODULE FOUND /tmp/payload.so");
  f.detail = "two\nlines\tand\\slash";
  CHECK(format_alert(f).find("two\\nlines\\tand\\\\slash") != std::string::npos);
  CHECK(format_alert(f).find('\n') == std::string::npos);
  CHECK(format_heartbeat(3, 1000) == "1970-01-01T00:00:01.000Z\tINFO\tCYCLE\t-\tn=3");
}

TEST_CASE("same-millisecond findings keep their order") {
  std::ostringstream out;
  StreamSink sink(out);
  sink.emit(make_finding(FindingCode::kUsbUnauthorized, "a", "first", 5));
  sink.emit(make_finding(FindingCode::kUsbDisabled, "a", "second", 5));
  std::string text = out.str();
  CHECK(text.find("first") < text.find("second"));
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}

TEST_CASE("config validation") {
  MonitorConfig c;
  CHECK_NOTHROW(validate_config(c));
  c.usb_interval_ms = 0;
  CHECK_THROWS_AS(validate_config(c), std::invalid_argument);
  c = MonitorConfig{};
  c.process_interval_ms = -5;
  CHECK_THROWS_AS(validate_config(c), std::invalid_argument);
  c = MonitorConfig{};
  c.max_cycles = 0;
  CHECK_THROWS_AS(validate_config(c), std::invalid_argument);
}

TEST_CASE("clean host writes heartbeats only") {
  HostFixture f = testutil::rtu_fixture();
  Baseline b = baseline_of(f);
  SimulatedHost host(f);
  MonitorConfig config;
  config.max_cycles = 3;
  MemorySink sink;
  auto summary = run_monitor(host, b, allowlist_from(f), config, sink);
  CHECK(summary.status == MonitorStatus::kCompleted);
  CHECK(summary.cycles == 3);
  CHECK(summary.findings == 0);
  CHECK(summary.exit_code() == 0);
  CHECK(sink.lines() == std::vector<std::string>{
                            format_heartbeat(1, f.clock_start_ms),
                            format_heartbeat(2, f.clock_start_ms + 5000),
                            format_heartbeat(3, f.clock_start_ms + 10000)});
  CHECK(summary.usb_polls == 101);
}

TEST_CASE("poll times follow the schedule exactly") {
  HostFixture f = testutil::rtu_fixture();
  Baseline b = baseline_of(f);
  RecordingHost host(f);
  MonitorConfig config;
  config.usb_interval_ms = 70;
  config.process_interval_ms = 350;
  config.max_cycles = 4;
  MemorySink sink;
  run_monitor(host, b, allowlist_from(f), config, sink);
  const TimeMs start = f.clock_start_ms;
  std::vector<std::pair<char, TimeMs>> expected;
  for (TimeMs k = 0; start + k * 70 <= start + 3 * 350; ++k) {
    TimeMs t = start + k * 70;
    expected.emplace_back('U', t);
    if ((t - start) % 350 == 0) expected.emplace_back('P', t);
  }
  CHECK(host.events == expected);
}

TEST_CASE("device inserted between polls is caught at the next poll") {
  HostFixture f = testutil::rtu_fixture();
  Baseline b = baseline_of(f);
  AllowList allow = allowlist_from(f);
  for (TimeMs offset : {1, 99, 100, 101, 250, 4999}) {
    HostFixture g = f;
    g.usb_devices.push_back(stick(f.clock_start_ms + offset));
    SimulatedHost host(g);
    MonitorConfig config;
    config.max_cycles = 2;
    MemorySink sink;
    run_monitor(host, b, allow, config, sink);
    auto findings = sink.findings();
    REQUIRE(findings.size() == 2);
    CHECK(findings[0].code == FindingCode::kUsbUnauthorized);
    TimeMs first_poll = f.clock_start_ms + (offset + 99) / 100 * 100;
    CHECK(findings[0].at_ms == first_poll);
    CHECK(findings[1].code == FindingCode::kUsbDisabled);
  }
}

TEST_CASE("stop during a sweep lets the sweep finish") {
  HostFixture f = testutil::rtu_fixture();
  Baseline b = baseline_of(f);
  f.processes.push_back(testutil::process("intruder", 900, {}));
  RecordingHost host(f);
  std::stop_source stop;
  int sweeps = 0;
  host.on_sweep = [&] {
    if (++sweeps == 2) stop.request_stop();
  };
  MemorySink sink;
  auto summary = run_monitor(host, b, allowlist_from(f), MonitorConfig{}, sink,
                             stop.get_token());
  CHECK(summary.status == MonitorStatus::kStopped);
  CHECK(summary.cycles == 2);
  auto lines = sink.lines();
  REQUIRE(lines.size() == 4);
  CHECK(lines[2].find("PROCESS_UNKNOWN") != std::string::npos);
  CHECK(lines[3].find("CYCLE\t-\tn=2") != std::string::npos);
  CHECK(summary.exit_code() == 1);
}

TEST_CASE("stop requested from another thread") {
  HostFixture f = testutil::rtu_fixture();
  Baseline b = baseline_of(f);
  SimulatedHost host(f);
  std::stop_source stop;
  MemorySink sink;
  MonitorSummary summary;
  std::thread runner([&] {
    summary = run_monitor(host, b, allowlist_from(f), MonitorConfig{}, sink,
                          stop.get_token());
  });
  while (sink.lines().size() < 3) std::this_thread::yield();
  stop.request_stop();
  runner.join();
  CHECK(summary.status == MonitorStatus::kStopped);
  for (const auto& line : sink.lines()) CHECK(line.find("CYCLE") != std::string::npos);
}

TEST_CASE("sink failure ends the loop with status 2") {
  HostFixture f = testutil::rtu_fixture();
  SimulatedHost host(f);
  BrokenSink sink;
  MonitorConfig config;
  config.max_cycles = 5;
  auto summary = run_monitor(host, baseline_of(f), AllowList{}, config, sink);
  CHECK(summary.status == MonitorStatus::kSinkError);
  CHECK(summary.exit_code() == 2);
  CHECK(summary.error == "disk full");

  std::ostringstream bad;
  bad.setstate(std::ios::badbit);
  StreamSink stream(bad);
  CHECK_THROWS_AS(stream.heartbeat(1, 0), SinkError);
}

TEST_CASE("concurrent writers never interleave inside a line") {
  std::ostringstream out;
  StreamSink sink(out);
  std::vector<std::thread> writers;
  for (int w = 0; w < 4; ++w) {
    writers.emplace_back([&sink, w] {
      for (int i = 0; i < 300; ++i) {
        sink.emit(make_finding(FindingCode::kModuleUnknown, "p" + std::to_string(w),
                               std::string(50, static_cast<char>('a' + w)), i));
      }
    });
  }
  for (auto& t : writers) t.join();
  std::istringstream in(out.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    CHECK(std::count(line.begin(), line.end(), '\t') == 4);
    char c = line.back();
    CHECK(line.substr(line.size() - 50) == std::string(50, c));
  }
  CHECK(n == 1200);
}

}  // TEST_SUITE
