#include "hids/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

#include "hids/baseline_store.hpp"
#include "hids/detection.hpp"
#include "hids/monitor.hpp"
#include "hids/simulated_host.hpp"
#include "json.hpp"

namespace hids {

namespace {

constexpr std::uint64_t kPage = 0x100;
constexpr std::uint64_t kPayloadBase = 0x7f0000000000ULL;
constexpr TimeMs kClockStart = 1'700'000'000'000;

constexpr const char* kProcessNames[] = {
    "scada-hmi",  "rtu-gateway", "historian",  "modbus-bridge", "opcua-server",
    "alarm-daemon", "iec104-slave", "sshd",    "cron",          "plc-runtime",
};

constexpr const char* kLibraries[] = {
    "/usr/lib/x86_64-linux-gnu/libc.so.6",
    "/usr/lib/x86_64-linux-gnu/libm.so.6",
    "/usr/lib/x86_64-linux-gnu/libpthread.so.0",
    "/usr/lib/x86_64-linux-gnu/libssl.so.3",
    "/usr/lib/libmodbus.so.5",
    "/opt/scada/lib/libiec104.so",
    "/opt/scada/lib/vendor plc/libruntime.so",
    "/usr/lib/x86_64-linux-gnu/ld-linux-x86-64.so.2",
};

std::string hex_tag(std::uint64_t v, int digits) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%0*llx", digits,
                static_cast<unsigned long long>(v));
  std::string s = buf;
  return s.substr(s.size() - static_cast<std::size_t>(digits));
}

FixtureModule make_region(SeededRng& rng, const std::string& path,
                          std::string_view perms, std::uint64_t& cursor,
                          std::uint64_t max_pages) {
  FixtureModule m;
  m.path = path;
  parse_permissions(perms, m.perms);
  m.start_addr = cursor;
  m.end_addr = cursor + (1 + rng.below(max_pages)) * kPage;
  std::uint64_t size = m.end_addr - m.start_addr;
  // Mostly full generated content; sometimes a zero-padded tail.
  std::uint64_t length = rng.below(4) == 0 ? rng.below(size + 1) : size;
  m.content = GeneratedContent{rng.next(), length};
  cursor = m.end_addr + rng.below(2) * kPage;
  return m;
}

void add_module(SeededRng& rng, const std::string& path, std::uint64_t& cursor,
                std::uint64_t max_pages, std::vector<FixtureModule>& out) {
  out.push_back(make_region(rng, path, "r--p", cursor, max_pages));
  out.push_back(make_region(rng, path, "r-xp", cursor, max_pages));
  if (rng.below(3) == 0) {
    out.push_back(make_region(rng, path, "r--p", cursor, max_pages));
    out.push_back(make_region(rng, path, "r-xp", cursor, max_pages));
  }
  out.push_back(make_region(rng, path, "r--p", cursor, max_pages));
  out.push_back(make_region(rng, path, "rw-p", cursor, max_pages));
}

FixtureUsbDevice trusted_device(std::uint16_t vid, std::uint16_t pid,
                                std::string serial, std::string product) {
  FixtureUsbDevice d;
  d.vendor_id = vid;
  d.product_id = pid;
  d.serial = std::move(serial);
  d.product = std::move(product);
  return d;
}

FixtureModule payload_region(SeededRng& rng, const std::string& path) {
  FixtureModule m;
  m.path = path;
  parse_permissions("r-xp", m.perms);
  m.start_addr = kPayloadBase + rng.below(0x1000) * 0x1000;
  m.end_addr = m.start_addr + 0x1000;
  m.content = GeneratedContent{rng.next(), 0x1000};
  return m;
}

FixtureUsbDevice rogue_device(SeededRng& rng) {
  FixtureUsbDevice d;
  d.vendor_id = 0x0781;
  d.product_id = 0x5567;
  d.serial = hex_tag(rng.next(), 16);
  d.product = "Cruzer Blade";
  return d;
}

bool has_finding(const std::vector<Finding>& findings, FindingCode code,
                 const std::string& subject) {
  return std::any_of(findings.begin(), findings.end(), [&](const Finding& f) {
    return f.code == code && f.subject == subject;
  });
}

void require_trials(std::uint64_t trials) {
  if (trials < 1) throw ScenarioError("trials must be >= 1");
}

}  // namespace

std::uint64_t SeededRng::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("SeededRng::below(0)");
  // Reject the incomplete top bucket so every residue is equally likely.
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % bound;
}

std::int64_t SeededRng::between(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("SeededRng::between: hi < lo");
  auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(span == 0 ? next() : below(span));
}

HostFixture generate_fixture(std::uint64_t seed, const GeneratorOptions& options) {
  SeededRng rng(seed);
  HostFixture fixture;
  fixture.clock_start_ms = kClockStart;

  constexpr int kNameCount = static_cast<int>(std::size(kProcessNames));
  int count = static_cast<int>(rng.between(
      std::clamp(options.min_processes, 0, kNameCount),
      std::clamp(options.max_processes, options.min_processes, kNameCount)));
  std::vector<std::string> names(std::begin(kProcessNames), std::end(kProcessNames));
  for (int i = 0; i < count; ++i) {
    std::swap(names[static_cast<std::size_t>(i)],
              names[static_cast<std::size_t>(i) + rng.below(names.size() - i)]);
  }
  const std::uint64_t pages = std::max<std::uint64_t>(1, options.max_region_pages);

  for (int i = 0; i < count; ++i) {
    FixtureProcess proc;
    proc.name = names[static_cast<std::size_t>(i)];
    proc.pid = 100 * (i + 1) + static_cast<Pid>(rng.below(90));

    std::uint64_t cursor = 0x400000 + rng.below(16) * 0x1000;
    add_module(rng, "/opt/scada/bin/" + proc.name, cursor, pages, proc.modules);

    if (options.special_regions && rng.coin()) {
      proc.modules.push_back(make_region(rng, "[heap]", "rw-p", cursor, pages));
    }

    cursor = 0x7d0000000000ULL + rng.below(0x100) * 0x1000;
    std::vector<std::string> libs(std::begin(kLibraries), std::end(kLibraries));
    auto nlibs = static_cast<std::size_t>(
        rng.below(static_cast<std::uint64_t>(std::max(0, options.max_libraries)) + 1));
    nlibs = std::min(nlibs, libs.size());
    for (std::size_t k = 0; k < nlibs; ++k) {
      std::swap(libs[k], libs[k + rng.below(libs.size() - k)]);
      add_module(rng, libs[k], cursor, pages, proc.modules);
      cursor += 0x10000;
    }

    if (rng.coin()) {
      proc.modules.push_back(
          make_region(rng, "/dev/shm/scada-tags", "rw-s", cursor, pages));
    }
    if (options.special_regions) {
      if (rng.coin()) {
        proc.modules.push_back(make_region(rng, "", "rw-p", cursor, pages));
      }
      if (rng.coin()) {
        proc.modules.push_back(make_region(rng, "", "rwxp", cursor, pages));
      }
      cursor = 0x7e0000000000ULL + rng.below(0x100) * 0x1000;
      proc.modules.push_back(make_region(rng, "[stack]", "rw-p", cursor, pages));
      if (rng.coin()) {
        proc.modules.push_back(make_region(rng, "[vvar]", "r--p", cursor, pages));
      }
      proc.modules.push_back(make_region(rng, "[vdso]", "r-xp", cursor, pages));
    }
    fixture.processes.push_back(std::move(proc));
  }

  if (options.usb_devices) {
    fixture.usb_devices.push_back(
        trusted_device(0x1d6b, 0x0002, "0000:00:14.0", "xHCI Host Controller"));
    if (rng.coin()) {
      fixture.usb_devices.push_back(
          trusted_device(0x046d, 0xc31c, "", "USB Keyboard"));
    }
  }
  return fixture;
}

AllowList allowlist_from(const HostFixture& fixture) {
  SimulatedHost host(fixture);
  AllowList allow;
  for (const auto& d : host.list_usb_devices()) {
    allow.entries.insert(generate_device_id(d));
  }
  return allow;
}

const char* to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::kUsbInsertion: return "USB_INSERTION";
    case Scenario::kDownloadedMalware: return "DOWNLOADED_MALWARE";
    case Scenario::kUsbBypass: return "USB_BYPASS";
  }
  return "UNKNOWN";
}

std::optional<Scenario> parse_scenario(std::string_view text) {
  if (text == "s1") return Scenario::kUsbInsertion;
  if (text == "s2") return Scenario::kDownloadedMalware;
  if (text == "s3") return Scenario::kUsbBypass;
  return std::nullopt;
}

double ScenarioReport::detection_rate() const {
  return trials ? static_cast<double>(detected) / static_cast<double>(trials) : 0.0;
}

double ScenarioReport::disable_rate() const {
  return trials ? static_cast<double>(disabled) / static_cast<double>(trials) : 0.0;
}

double analytic_disable_probability(double poll_ms, double autorun_max_ms) {
  if (!(poll_ms > 0) || !(poll_ms <= autorun_max_ms)) {
    throw ScenarioError("need 0 < poll_ms <= autorun_max_ms");
  }
  // Written as one division so (100, 1000) yields the double nearest 0.95.
  return (2 * autorun_max_ms - poll_ms) / (2 * autorun_max_ms);
}

ScenarioReport run_scenario_usb_insertion(std::uint64_t trials, std::uint64_t seed,
                                          TimeMs poll_ms, TimeMs autorun_max_ms) {
  require_trials(trials);
  if (poll_ms < 1 || poll_ms > autorun_max_ms) {
    throw ScenarioError("need 1 <= poll_ms <= autorun_max_ms");
  }
  ScenarioReport report;
  report.scenario = Scenario::kUsbInsertion;
  report.trials = trials;
  report.seed = seed;
  report.params = TimingParams{poll_ms, autorun_max_ms};

  GeneratorOptions small;
  small.max_processes = 2;
  small.max_libraries = 1;
  small.max_region_pages = 2;

  SeededRng master(seed);
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    SeededRng rng(master.next());
    HostFixture fixture = generate_fixture(rng.next(), small);
    const auto latency = static_cast<TimeMs>(rng.below(static_cast<std::uint64_t>(poll_ms)));
    const auto autorun =
        static_cast<TimeMs>(rng.below(static_cast<std::uint64_t>(autorun_max_ms)));

    SimulatedHost host(fixture);
    const TimeMs start = host.now_ms();
    Baseline baseline = run_setup(host).baseline;
    AllowList allow = allowlist_from(fixture);

    const auto& target = fixture.processes[rng.below(fixture.processes.size())];
    const std::string payload_path = "/media/usb0/autorun/payload.so";
    FixtureUsbDevice device = rogue_device(rng);
    // The monitor polls at start + k*poll_ms; the poll at start + 2*poll_ms
    // is the first to see the device, `latency` ms after insertion.
    device.inserted_at_ms = start + 2 * poll_ms - latency;
    device.autorun_delay_ms = autorun;
    device.payload = UsbPayload{target.name, std::nullopt,
                                {payload_region(rng, payload_path)}};
    const DeviceId id = generate_device_id(
        {device.vendor_id, device.product_id, device.serial, device.product, {}});
    const BusRef ref = host.insert_device(device);

    MonitorConfig config;
    config.usb_interval_ms = poll_ms;
    config.process_interval_ms = autorun_max_ms;
    // Sweeps at start, D, 2D, 3D; 3D > 2P + D exceeds every autorun instant.
    config.max_cycles = 4;
    MemorySink sink;
    run_monitor(host, baseline, allow, config, sink);
    const auto findings = sink.findings();

    if (has_finding(findings, FindingCode::kUsbUnauthorized, id.value.str())) {
      ++report.detected;
    }
    PayloadState state = host.payload_state(ref);
    if (state == PayloadState::kCancelled) {
      ++report.disabled;
    } else if (state == PayloadState::kFired) {
      ++report.payloads_fired;
      if (has_finding(findings, FindingCode::kModuleUnknown,
                      target.name + ":" + payload_path)) {
        ++report.fired_payloads_caught;
      }
    }
  }
  return report;
}

MalwareTrial run_malware_trial(const HostFixture& fixture, SeededRng& rng,
                               MutationTarget target, std::uint8_t xor_mask) {
  SimulatedHost host(fixture);
  Baseline baseline = run_setup(host).baseline;

  struct Candidate {
    const FixtureProcess* process;
    const FixtureModule* module;
  };
  std::vector<Candidate> candidates;
  for (const auto& p : fixture.processes) {
    for (const auto& m : p.modules) {
      MemoryRegion r = region_of(m);
      bool wanted = target == MutationTarget::kExecutable
                        ? is_hashable_region(r)
                        : (r.perms.readable && r.perms.writable &&
                           !r.perms.executable && !is_special_region(r));
      if (wanted) candidates.push_back({&p, &m});
    }
  }
  if (candidates.empty()) {
    throw ScenarioError(target == MutationTarget::kExecutable
                            ? "fixture has no hashable region"
                            : "fixture has no writable file-backed region");
  }

  const Candidate& c = candidates[rng.below(candidates.size())];
  const std::uint64_t addr =
      c.module->start_addr + rng.below(c.module->end_addr - c.module->start_addr);
  Bytes original = host.read_mem(c.process->pid, addr, 1);
  const std::uint8_t patched[] = {static_cast<std::uint8_t>(original[0] ^ xor_mask)};
  host.write_mem(c.process->pid, addr, patched);

  MalwareTrial trial;
  trial.subject = c.process->name + ":" + c.module->path;
  trial.content_changed = xor_mask != 0;
  trial.detected = has_finding(check_processes(host, baseline),
                               FindingCode::kModuleHashMismatch, trial.subject);
  return trial;
}

ScenarioReport run_scenario_downloaded_malware(std::uint64_t trials,
                                               std::uint64_t seed) {
  require_trials(trials);
  ScenarioReport report;
  report.scenario = Scenario::kDownloadedMalware;
  report.trials = trials;
  report.seed = seed;

  SeededRng master(seed);
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    SeededRng rng(master.next());
    HostFixture fixture = generate_fixture(rng.next());
    auto mask = static_cast<std::uint8_t>(1 + rng.below(255));
    if (run_malware_trial(fixture, rng, MutationTarget::kExecutable, mask).detected) {
      ++report.detected;
    }
  }
  return report;
}

InjectionTrial run_injection_trial(const HostFixture& fixture, SeededRng& rng,
                                   InjectionKind kind) {
  if (fixture.processes.empty()) throw ScenarioError("fixture has no processes");
  SimulatedHost host(fixture);
  Baseline baseline = run_setup(host).baseline;

  const auto& victim = fixture.processes[rng.below(fixture.processes.size())];
  InjectionTrial trial;
  UsbPayload payload;
  switch (kind) {
    case InjectionKind::kNewModule: {
      std::string path = "/media/usb0/.cache/lib" + hex_tag(rng.next(), 8) + ".so";
      payload.target = victim.name;
      payload.modules.push_back(payload_region(rng, path));
      trial.subject = victim.name + ":" + path;
      trial.expected = FindingCode::kModuleUnknown;
      break;
    }
    case InjectionKind::kExistingPath: {
      auto paths = baseline.module_paths(victim.name);
      if (paths.empty()) throw ScenarioError("victim has no baselined module");
      std::string path = paths[rng.below(paths.size())];
      payload.target = victim.name;
      payload.modules.push_back(payload_region(rng, path));
      trial.subject = victim.name + ":" + path;
      trial.expected = FindingCode::kModuleHashMismatch;
      break;
    }
    case InjectionKind::kNewProcess: {
      Pid max_pid = 0;
      for (const auto& p : fixture.processes) max_pid = std::max(max_pid, p.pid);
      payload.target = "usb-dropper-" + hex_tag(rng.next(), 6);
      payload.spawn_pid = max_pid + 1 + static_cast<Pid>(rng.below(1000));
      payload.modules.push_back(payload_region(rng, "/media/usb0/dropper"));
      trial.subject = payload.target;
      trial.expected = FindingCode::kProcessUnknown;
      break;
    }
  }

  // Zero autorun delay: the payload lands at insertion, ahead of any poll.
  FixtureUsbDevice device = rogue_device(rng);
  device.inserted_at_ms = host.now_ms();
  device.autorun_delay_ms = 0;
  device.payload = std::move(payload);
  host.insert_device(device);

  trial.detected =
      has_finding(check_processes(host, baseline), trial.expected, trial.subject);
  return trial;
}

ScenarioReport run_scenario_usb_bypass(std::uint64_t trials, std::uint64_t seed) {
  require_trials(trials);
  ScenarioReport report;
  report.scenario = Scenario::kUsbBypass;
  report.trials = trials;
  report.seed = seed;

  SeededRng master(seed);
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    SeededRng rng(master.next());
    HostFixture fixture = generate_fixture(rng.next());
    if (run_injection_trial(fixture, rng, InjectionKind::kNewModule).detected) {
      ++report.detected;
    }
  }
  return report;
}

ScenarioReport run_scenario(Scenario scenario, std::uint64_t trials,
                            std::uint64_t seed, const TimingParams& params) {
  switch (scenario) {
    case Scenario::kUsbInsertion:
      return run_scenario_usb_insertion(trials, seed, params.poll_ms,
                                        params.autorun_max_ms);
    case Scenario::kDownloadedMalware:
      return run_scenario_downloaded_malware(trials, seed);
    case Scenario::kUsbBypass:
      return run_scenario_usb_bypass(trials, seed);
  }
  throw ScenarioError("unknown scenario");
}

std::string report_to_json(const ScenarioReport& report) {
  nlohmann::ordered_json j;
  j["scenario"] = to_string(report.scenario);
  j["seed"] = report.seed;
  j["trials"] = report.trials;
  j["detected"] = report.detected;
  j["detection_rate"] = report.detection_rate();
  if (report.scenario == Scenario::kUsbInsertion) {
    j["disabled"] = report.disabled;
    j["disable_rate"] = report.disable_rate();
    j["payloads_fired"] = report.payloads_fired;
    j["fired_payloads_caught"] = report.fired_payloads_caught;
  }
  if (report.params) {
    j["params"] = {{"poll_ms", report.params->poll_ms},
                   {"autorun_max_ms", report.params->autorun_max_ms}};
    j["analytic_disable_probability"] = analytic_disable_probability(
        static_cast<double>(report.params->poll_ms),
        static_cast<double>(report.params->autorun_max_ms));
  }
  return j.dump(2) + "\n";
}

std::string report_summary_line(const ScenarioReport& report) {
  std::string tag = report.scenario == Scenario::kUsbInsertion ? "s1"
                    : report.scenario == Scenario::kDownloadedMalware ? "s2"
                                                                      : "s3";
  std::string line = tag + " " + to_string(report.scenario) +
                     " trials=" + std::to_string(report.trials) +
                     " detected=" + std::to_string(report.detected);
  if (report.scenario == Scenario::kUsbInsertion) {
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.4f", report.disable_rate());
    line += " disabled=" + std::to_string(report.disabled) + " disable_rate=" + rate;
  }
  line += " seed=" + std::to_string(report.seed);
  return line;
}

}  // namespace hids
