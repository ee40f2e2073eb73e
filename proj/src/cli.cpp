#include "hids/cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>
#include <stop_token>
#include <thread>

#include "CLI11.hpp"
#include "hids/baseline_store.hpp"
#include "hids/detection.hpp"
#include "hids/monitor.hpp"
#include "hids/procfs_host.hpp"
#include "hids/scenario.hpp"
#include "hids/simulated_host.hpp"
#include "hids/usb_ident.hpp"

namespace hids {

namespace {

// Configuration problems that map to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_stop_requested{false};

extern "C" void on_stop_signal(int) { g_stop_requested.store(true); }

struct HostFlags {
  std::string fixture;
  bool real = false;
};

struct KeyFlags {
  std::string key_file;
};

void add_host_flags(CLI::App* cmd, HostFlags& flags) {
  auto* fixture = cmd->add_option("--fixture", flags.fixture,
                                  "Simulated host fixture (JSON)");
  auto* real = cmd->add_flag("--real", flags.real, "Inspect the live host");
  fixture->excludes(real);
  real->excludes(fixture);
}

void add_key_flag(CLI::App* cmd, KeyFlags& flags) {
  cmd->add_option("--key-file", flags.key_file,
                  "Seal key, 64 hex chars (default: $HIDS_SEAL_KEY)");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  out.close();
  if (!out) throw UsageError("cannot write " + path);
}

std::unique_ptr<Host> open_host(const HostFlags& flags) {
  if (flags.real) return std::make_unique<ProcfsHost>();
  if (flags.fixture.empty()) throw UsageError("one of --fixture or --real is required");
  try {
    return load_fixture(read_file(flags.fixture));
  } catch (const FixtureError& e) {
    throw UsageError(e.what());
  }
}

struct LoadedKey {
  SealKey key;
  bool weak = false;
};

LoadedKey load_key(const KeyFlags& flags) {
  std::string hex;
  if (!flags.key_file.empty()) {
    hex = read_file(flags.key_file);
  } else if (const char* env = std::getenv("HIDS_SEAL_KEY"); env && *env) {
    hex = env;
  } else {
    return {SealKey{}, true};
  }
  auto key = SealKey::from_hex(hex);
  if (!key) throw UsageError("seal key must be exactly 64 hex characters");
  return {*key, key->is_zero()};
}

Finding weak_key_finding(TimeMs now) {
  return make_finding(FindingCode::kWeakKeyWarning, "-",
                      "no seal key configured; using the all-zero development "
                      "key (set HIDS_SEAL_KEY or --key-file)",
                      now);
}

Finding seal_finding(const std::string& path, const StoreError& e, TimeMs now) {
  return make_finding(FindingCode::kBaselineSealInvalid, path, e.what(), now);
}

// Opens the alert destination; "-" or empty is `fallback`.
class SinkTarget {
 public:
  SinkTarget(const std::string& path, std::ostream& fallback) {
    if (path.empty() || path == "-") {
      stream_ = &fallback;
    } else {
      file_.open(path, std::ios::app);
      if (!file_) throw UsageError("cannot open alert sink " + path);
      stream_ = &file_;
    }
  }
  std::ostream& stream() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

int cmd_setup(const HostFlags& host_flags, const KeyFlags& key_flags,
              const std::string& out_path, const std::string& allow_path,
              const std::vector<std::string>& whitelist, std::ostream& out,
              std::ostream& err) {
  auto host = open_host(host_flags);
  LoadedKey key = load_key(key_flags);
  if (key.weak) err << format_alert(weak_key_finding(host->now_ms())) << "\n";

  SetupResult setup = run_setup(*host);
  for (const auto& entry : whitelist) {
    auto colon = entry.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == entry.size()) {
      throw UsageError("--update-whitelist expects PROCESS:PATH, got " + entry);
    }
    setup.baseline.whitelist_update(entry.substr(0, colon), entry.substr(colon + 1));
  }
  for (const auto& line : setup.log) err << line << "\n";
  for (const auto& w : setup.warnings) err << "warning: " << w << "\n";
  write_file(out_path, serialize_baseline(setup.baseline, key.key));

  std::size_t modules = 0;
  for (const auto& [name, entry] : setup.baseline.processes()) {
    modules += entry.module_hashes.size();
  }
  out << "baseline: " << setup.baseline.processes().size() << " processes, "
      << modules << " modules -> " << out_path << "\n";

  if (!allow_path.empty()) {
    AllowList allow;
    for (const auto& d : host->list_usb_devices()) {
      allow.entries.insert(generate_device_id(d));
    }
    write_file(allow_path, serialize_allowlist(allow, key.key));
    out << "allowlist: " << allow.entries.size() << " devices -> " << allow_path
        << "\n";
  }
  return kExitClean;
}

int cmd_scan(const HostFlags& host_flags, const KeyFlags& key_flags,
             const std::string& baseline_path, const std::string& sink_path,
             std::ostream& out, std::ostream& err) {
  auto host = open_host(host_flags);
  LoadedKey key = load_key(key_flags);
  SinkTarget target(sink_path, out);
  StreamSink sink(target.stream());
  if (key.weak) sink.emit(weak_key_finding(host->now_ms()));

  Baseline baseline;
  try {
    baseline = deserialize_baseline(read_file(baseline_path), key.key);
  } catch (const StoreError& e) {
    if (e.code() != StoreErrorCode::kSealInvalid) throw UsageError(e.what());
    sink.emit(seal_finding(baseline_path, e, host->now_ms()));
    return kExitSealInvalid;
  }

  const TimeMs started = host->now_ms();
  std::vector<Finding> findings = check_processes(*host, baseline);
  for (const auto& f : findings) sink.emit(f);
  ScanReport report = summarize(findings, host->now_ms() - started);

  err << "scan: " << findings.size() << " findings";
  for (const auto& [code, n] : report.counts) err << " " << to_string(code) << "=" << n;
  err << "\n";
  return report.exit_code();
}

int cmd_monitor(const HostFlags& host_flags, const KeyFlags& key_flags,
                const std::string& baseline_path, const std::string& allow_path,
                MonitorConfig config, std::ostream& out, std::ostream& err) {
  try {
    validate_config(config);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  auto host = open_host(host_flags);
  LoadedKey key = load_key(key_flags);
  SinkTarget target(config.alert_path, out);
  StreamSink sink(target.stream());
  if (key.weak) sink.emit(weak_key_finding(host->now_ms()));

  Baseline baseline;
  AllowList allow;
  std::string current = baseline_path;
  try {
    baseline = deserialize_baseline(read_file(baseline_path), key.key);
    current = allow_path;
    allow = deserialize_allowlist(read_file(allow_path), key.key);
    allow.source_path = allow_path;
  } catch (const StoreError& e) {
    if (e.code() != StoreErrorCode::kSealInvalid) throw UsageError(e.what());
    sink.emit(seal_finding(current, e, host->now_ms()));
    return kExitSealInvalid;
  }

  g_stop_requested.store(false);
  auto old_int = std::signal(SIGINT, on_stop_signal);
  auto old_term = std::signal(SIGTERM, on_stop_signal);
  std::stop_source stop;
  std::jthread relay([&stop](std::stop_token self) {
    while (!self.stop_requested()) {
      if (g_stop_requested.load()) {
        stop.request_stop();
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });

  MonitorSummary summary =
      run_monitor(*host, baseline, allow, config, sink, stop.get_token());

  relay.request_stop();
  relay.join();
  std::signal(SIGINT, old_int);
  std::signal(SIGTERM, old_term);

  if (summary.status == MonitorStatus::kSinkError) {
    err << "monitor: " << summary.error << "\n";
  }
  err << "monitor: " << summary.cycles << " cycles, " << summary.usb_polls
      << " usb polls, " << summary.findings << " findings\n";
  return summary.exit_code();
}

int cmd_usb_list(const HostFlags& host_flags, std::ostream& out) {
  auto host = open_host(host_flags);
  for (const auto& d : host->list_usb_devices()) {
    char ids[16];
    std::snprintf(ids, sizeof ids, "%04x:%04x", d.vendor_id, d.product_id);
    out << generate_device_id(d).value.str() << "\t" << ids << "\t"
        << d.serial_number << "\t" << d.product_name << "\t" << d.bus_ref.value
        << "\n";
  }
  return kExitClean;
}

int cmd_usb_check(const HostFlags& host_flags, const KeyFlags& key_flags,
                  const std::string& allow_path, std::ostream& out) {
  auto host = open_host(host_flags);
  LoadedKey key = load_key(key_flags);
  StreamSink sink(out);
  if (key.weak) sink.emit(weak_key_finding(host->now_ms()));
  AllowList allow;
  try {
    allow = deserialize_allowlist(read_file(allow_path), key.key);
  } catch (const StoreError& e) {
    if (e.code() != StoreErrorCode::kSealInvalid) throw UsageError(e.what());
    sink.emit(seal_finding(allow_path, e, host->now_ms()));
    return kExitSealInvalid;
  }
  auto findings = check_usb(*host, allow);
  for (const auto& f : findings) sink.emit(f);
  return summarize(findings).exit_code();
}

int cmd_verify(const std::string& path, const KeyFlags& key_flags,
               std::ostream& out, std::ostream& err) {
  LoadedKey key = load_key(key_flags);
  if (key.weak) err << "warning: verifying with the all-zero development key\n";
  std::string document = read_file(path);
  try {
    if (document.rfind("HIDSALLOW 1\n", 0) == 0) {
      auto allow = deserialize_allowlist(document, key.key);
      out << path << ": seal ok, allowlist with " << allow.entries.size()
          << " devices\n";
    } else {
      auto baseline = deserialize_baseline(document, key.key);
      out << path << ": seal ok, baseline with " << baseline.processes().size()
          << " processes\n";
    }
  } catch (const StoreError& e) {
    err << path << ": " << e.what() << "\n";
    return e.code() == StoreErrorCode::kSealInvalid ? kExitSealInvalid : kExitUsage;
  }
  return kExitClean;
}

int cmd_simulate(const std::string& which, std::uint64_t trials, std::uint64_t seed,
                 const TimingParams& params, const std::string& report_path,
                 std::ostream& out) {
  auto scenario = parse_scenario(which);
  if (!scenario) throw UsageError("scenario must be s1, s2 or s3");
  ScenarioReport report;
  try {
    report = run_scenario(*scenario, trials, seed, params);
  } catch (const ScenarioError& e) {
    throw UsageError(e.what());
  }
  out << report_summary_line(report) << "\n";
  if (!report_path.empty()) write_file(report_path, report_to_json(report));
  return kExitClean;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Host intrusion detection for SCADA hosts", "hids"};
  app.require_subcommand(1);

  HostFlags host_flags;
  KeyFlags key_flags;

  auto* setup = app.add_subcommand("setup", "Enroll processes and USB devices");
  std::string out_path, allow_path, baseline_path, sink_path = "-";
  std::vector<std::string> whitelist;
  add_host_flags(setup, host_flags);
  add_key_flag(setup, key_flags);
  setup->add_option("--out", out_path, "Baseline file to write")->required();
  setup->add_option("--allowlist", allow_path,
                    "Also write an allow-list of attached USB devices");
  setup->add_option("--update-whitelist", whitelist,
                    "PROCESS:PATH whose hash changes are known updates");

  auto* scan = app.add_subcommand("scan", "One process sweep against a baseline");
  add_host_flags(scan, host_flags);
  add_key_flag(scan, key_flags);
  scan->add_option("--baseline", baseline_path, "Sealed baseline")->required();
  scan->add_option("--out", sink_path, "Alert sink file (default stdout)");

  MonitorConfig config;
  std::uint64_t max_cycles = 0;
  auto* monitor = app.add_subcommand("monitor", "Continuous USB and process checks");
  add_host_flags(monitor, host_flags);
  add_key_flag(monitor, key_flags);
  monitor->add_option("--baseline", baseline_path, "Sealed baseline")->required();
  monitor->add_option("--allowlist", allow_path, "Sealed USB allow-list")->required();
  monitor->add_option("--interval-ms", config.process_interval_ms,
                      "Process sweep interval")->capture_default_str();
  monitor->add_option("--usb-interval-ms", config.usb_interval_ms,
                      "USB poll interval")->capture_default_str();
  monitor->add_option("--max-cycles", max_cycles, "Stop after N process sweeps");
  monitor->add_option("--out", config.alert_path, "Alert sink file (default stdout)");

  auto* usb = app.add_subcommand("usb", "USB device inspection");
  usb->require_subcommand(1);
  auto* usb_list = usb->add_subcommand("list", "List attached devices and ids");
  add_host_flags(usb_list, host_flags);
  auto* usb_check = usb->add_subcommand("check", "Enforce the allow-list once");
  add_host_flags(usb_check, host_flags);
  add_key_flag(usb_check, key_flags);
  usb_check->add_option("--allowlist", allow_path, "Sealed USB allow-list")->required();

  auto* baseline_cmd = app.add_subcommand("baseline", "Baseline maintenance");
  baseline_cmd->require_subcommand(1);
  auto* verify = baseline_cmd->add_subcommand("verify", "Check a file's seal");
  std::string verify_path;
  verify->add_option("file", verify_path, "Baseline or allow-list file")->required();
  add_key_flag(verify, key_flags);

  auto* simulate = app.add_subcommand("simulate", "Run an attack scenario");
  std::string which;
  std::uint64_t trials = 100;
  std::uint64_t seed = 0;
  TimingParams params;
  std::string report_path;
  simulate->add_option("scenario", which, "s1, s2 or s3")->required();
  simulate->add_option("--trials", trials, "Trial count")->capture_default_str();
  simulate->add_option("--seed", seed, "RNG seed")->required();
  simulate->add_option("--poll-ms", params.poll_ms, "USB poll period (s1)")
      ->capture_default_str();
  simulate->add_option("--autorun-max-ms", params.autorun_max_ms,
                       "Upper bound of autorun delay (s1)")
      ->capture_default_str();
  simulate->add_option("--out", report_path, "JSON report file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*setup) {
      return cmd_setup(host_flags, key_flags, out_path, allow_path, whitelist, out, err);
    }
    if (*scan) return cmd_scan(host_flags, key_flags, baseline_path, sink_path, out, err);
    if (*monitor) {
      if (max_cycles > 0) config.max_cycles = max_cycles;
      return cmd_monitor(host_flags, key_flags, baseline_path, allow_path, config,
                         out, err);
    }
    if (*usb_list) return cmd_usb_list(host_flags, out);
    if (*usb_check) return cmd_usb_check(host_flags, key_flags, allow_path, out);
    if (*verify) return cmd_verify(verify_path, key_flags, out, err);
    if (*simulate) return cmd_simulate(which, trials, seed, params, report_path, out);
  } catch (const UsageError& e) {
    err << "hids: " << e.what() << "\n";
    return kExitUsage;
  } catch (const HostError& e) {
    err << "hids: " << to_string(e.code()) << ": " << e.what() << "\n";
    return kExitUsage;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace hids
