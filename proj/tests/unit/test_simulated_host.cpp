#include <doctest.h>

#include "hids/procmaps.hpp"
#include "hids/scenario.hpp"
#include "hids/simulated_host.hpp"
#include "support/test_util.hpp"

using namespace hids;
using testutil::literal;
using testutil::module;
using testutil::process;

namespace {

FixtureUsbDevice rogue(TimeMs inserted_at, TimeMs delay) {
  FixtureUsbDevice d;
  d.vendor_id = 0x0781;
  d.product_id = 0x5567;
  d.serial = "4C530001";
  d.product = "Cruzer Blade";
  d.inserted_at_ms = inserted_at;
  d.autorun_delay_ms = delay;
  d.payload = UsbPayload{
      "rtu", std::nullopt,
      {module("/tmp/payload.so", "r-xp", 0x7f0000000000, 0x7f0000001000)}};
  return d;
}

HostFixture one_rtu() {
  HostFixture f;
  f.processes.push_back(process(
      "rtu", 7,
      {module("/opt/scada/bin/rtu", "r-xp", 0x400000, 0x401000,
              literal({0xde, 0xad, 0xbe, 0xef}))}));
  return f;
}

bool has_path(SimulatedHost& host, Pid pid, const std::string& path) {
  for (const auto& r : parse_maps(host.read_maps(pid))) {
    if (r.path == path) return true;
  }
  return false;
}

}  // namespace

TEST_SUITE("simulated_host") {

TEST_CASE("processes are listed by ascending pid") {
  HostFixture f;
  f.processes.push_back(process("b", 20, {}));
  f.processes.push_back(process("a", 10, {}));
  SimulatedHost host(f);
  auto procs = host.list_processes();
  REQUIRE(procs.size() == 2);
  CHECK(procs[0] == ProcessRecord{10, "a"});
  CHECK(procs[1] == ProcessRecord{20, "b"});
  CHECK(SimulatedHost(HostFixture{}).list_processes().empty());
}

TEST_CASE("maps rendering of one module") {
  SimulatedHost host(one_rtu());
  CHECK(host.read_maps(7) ==
        "00400000-00401000 r-xp 00000000 00:00 0 /opt/scada/bin/rtu\n");
  HostFixture empty;
  empty.processes.push_back(process("idle", 3, {}));
  CHECK(SimulatedHost(empty).read_maps(3).empty());
  try {
    host.read_maps(8);
    FAIL("dead pid accepted");
  } catch (const HostError& e) {
    CHECK(e.code() == HostErrorCode::kNoSuchProcess);
  }
}

TEST_CASE("memory reads") {
  SimulatedHost host(one_rtu());
  CHECK(host.read_mem(7, 0x400000, 4) == Bytes{0xde, 0xad, 0xbe, 0xef});
  CHECK(host.read_mem(7, 0x400002, 3) == Bytes{0xbe, 0xef, 0x00});
  CHECK(host.read_mem(7, 0x400000, 0).empty());
  auto code_of = [&](Pid pid, std::uint64_t addr, std::uint64_t len) {
    try {
      host.read_mem(pid, addr, len);
    } catch (const HostError& e) {
      return e.code();
    }
    return HostErrorCode::kHostUnavailable;
  };
  CHECK(code_of(7, 0x400ffe, 4) == HostErrorCode::kOutOfRange);
  CHECK(code_of(7, 0x300000, 4) == HostErrorCode::kOutOfRange);
  CHECK(code_of(9, 0x400000, 4) == HostErrorCode::kNoSuchProcess);

  HostFixture guarded;
  guarded.processes.push_back(
      process("x", 1, {module("/a", "--xp", 0x1000, 0x2000)}));
  SimulatedHost g(guarded);
  try {
    g.read_mem(1, 0x1000, 4);
    FAIL("unreadable region read");
  } catch (const HostError& e) {
    CHECK(e.code() == HostErrorCode::kPermissionDenied);
  }
}

TEST_CASE("devices appear at their insertion time") {
  HostFixture f = one_rtu();
  f.clock_start_ms = 0;
  FixtureUsbDevice hub;
  hub.vendor_id = 0x1d6b;
  hub.product_id = 0x0002;
  f.usb_devices.push_back(hub);
  f.usb_devices.push_back(rogue(50, 1000));
  SimulatedHost host(f);

  auto devs = host.list_usb_devices();
  REQUIRE(devs.size() == 1);
  CHECK(devs[0].vendor_id == 0x1d6b);
  host.sleep_until(49);
  CHECK(host.list_usb_devices().size() == 1);
  host.sleep_until(50);
  devs = host.list_usb_devices();
  REQUIRE(devs.size() == 2);
  CHECK(devs[0].vendor_id == 0x0781);  // sorted by vendor id
  CHECK(SimulatedHost(HostFixture{}).list_usb_devices().empty());
}

TEST_CASE("detach before the autorun instant cancels the payload") {
  HostFixture f = one_rtu();
  f.usb_devices.push_back(rogue(0, 1000));
  SimulatedHost host(f);
  host.sleep_until(40);
  auto devs = host.list_usb_devices();
  REQUIRE(devs.size() == 1);
  BusRef ref = devs[0].bus_ref;
  CHECK(host.payload_state(ref) == PayloadState::kPending);
  CHECK(host.detach_device(ref).status == DetachStatus::kDetached);
  CHECK(host.payload_state(ref) == PayloadState::kCancelled);
  host.sleep_until(5000);
  CHECK_FALSE(has_path(host, 7, "/tmp/payload.so"));
  CHECK(host.list_usb_devices().empty());
  CHECK(host.detach_device(ref).status == DetachStatus::kAlreadyDetached);
}

TEST_CASE("late detach leaves the injected module in place") {
  HostFixture f = one_rtu();
  f.usb_devices.push_back(rogue(0, 10));
  SimulatedHost host(f);
  host.sleep_until(40);
  BusRef ref = host.list_usb_devices().at(0).bus_ref;
  CHECK(host.payload_state(ref) == PayloadState::kFired);
  CHECK(has_path(host, 7, "/tmp/payload.so"));
  CHECK(host.detach_device(ref).status == DetachStatus::kDetached);
  CHECK(has_path(host, 7, "/tmp/payload.so"));
}

TEST_CASE("detach at the autorun instant is too late") {
  HostFixture f = one_rtu();
  f.usb_devices.push_back(rogue(0, 40));
  SimulatedHost host(f);
  host.sleep_until(40);
  BusRef ref = host.list_usb_devices().at(0).bus_ref;
  host.detach_device(ref);
  CHECK(host.payload_state(ref) == PayloadState::kFired);
}

TEST_CASE("payload can start a new process") {
  HostFixture f = one_rtu();
  auto d = rogue(0, 5);
  d.payload->target = "dropper";
  d.payload->spawn_pid = 66;
  f.usb_devices.push_back(d);
  SimulatedHost host(f);
  CHECK(host.list_processes().size() == 1);
  host.advance_time(5);
  auto procs = host.list_processes();
  REQUIRE(procs.size() == 2);
  CHECK(procs[1] == ProcessRecord{66, "dropper"});
  CHECK(has_path(host, 66, "/tmp/payload.so"));
}

TEST_CASE("runtime insertion and unknown devices") {
  SimulatedHost host(one_rtu());
  BusRef ref = host.insert_device(rogue(0, 100));
  CHECK(host.list_usb_devices().size() == 1);
  CHECK(host.detach_device(BusRef{"nope"}).status == DetachStatus::kFailed);
  CHECK(host.detach_device(ref).status == DetachStatus::kDetached);
}

TEST_CASE("detached devices never come back and time never runs backwards") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeededRng rng(seed);
    HostFixture f = generate_fixture(seed);
    for (int i = 0; i < 3; ++i) {
      auto d = rogue(f.clock_start_ms + static_cast<TimeMs>(rng.below(500)),
                     static_cast<TimeMs>(rng.below(500)));
      d.serial = "S" + std::to_string(i);
      d.payload->target = f.processes[0].name;
      d.payload->modules[0].start_addr += 0x10000 * i;
      d.payload->modules[0].end_addr += 0x10000 * i;
      f.usb_devices.push_back(d);
    }
    SimulatedHost host(f);
    std::vector<BusRef> gone;
    TimeMs last = host.now_ms();
    for (int step = 0; step < 40; ++step) {
      TimeMs target = last + static_cast<TimeMs>(rng.below(60)) - 10;
      host.sleep_until(target);
      CHECK(host.now_ms() >= last);
      last = host.now_ms();
      auto devs = host.list_usb_devices();
      for (const auto& d : devs) {
        for (const auto& g : gone) CHECK_FALSE(d.bus_ref == g);
      }
      if (!devs.empty() && rng.coin()) {
        const auto& victim = devs[rng.below(devs.size())];
        if (host.detach_device(victim.bus_ref).status == DetachStatus::kDetached) {
          gone.push_back(victim.bus_ref);
        }
      }
    }
  }
}

TEST_CASE("identical fixtures behave identically") {
  HostFixture f = generate_fixture(77);
  f.usb_devices.push_back(rogue(f.clock_start_ms + 30, 20));
  f.usb_devices.back().payload->target = f.processes[0].name;
  std::string doc = fixture_to_json(f);
  auto a = load_fixture(doc);
  auto b = load_fixture(doc);
  for (TimeMs t : {0, 25, 50, 75}) {
    a->sleep_until(f.clock_start_ms + t);
    b->sleep_until(f.clock_start_ms + t);
    CHECK(a->list_processes() == b->list_processes());
    CHECK(a->list_usb_devices() == b->list_usb_devices());
    for (const auto& p : a->list_processes()) {
      std::string maps = a->read_maps(p.pid);
      CHECK(maps == b->read_maps(p.pid));
      for (const auto& r : parse_maps(maps)) {
        if (!r.perms.readable) continue;
        CHECK(a->read_mem(p.pid, r.start_addr, r.size()) ==
              b->read_mem(p.pid, r.start_addr, r.size()));
      }
    }
  }
}

}  // TEST_SUITE
