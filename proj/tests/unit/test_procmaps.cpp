#include <doctest.h>

#include "hids/procmaps.hpp"
#include "hids/scenario.hpp"
#include "hids/simulated_host.hpp"

using namespace hids;

TEST_SUITE("procmaps") {

TEST_CASE("libc line parses field by field") {
  auto r = parse_maps_line(
      "7f2c4d600000-7f2c4d7a2000 r-xp 00000000 08:02 131242 /usr/lib/libc-2.31.so");
  CHECK(r.start_addr == 0x7f2c4d600000ULL);
  CHECK(r.end_addr == 0x7f2c4d7a2000ULL);
  CHECK(r.perms.readable);
  CHECK_FALSE(r.perms.writable);
  CHECK(r.perms.executable);
  CHECK_FALSE(r.perms.shared);
  CHECK(r.offset == 0);
  CHECK(r.device == "08:02");
  CHECK(r.inode == 131242);
  CHECK(r.path == "/usr/lib/libc-2.31.so");
}

TEST_CASE("line without a path is anonymous") {
  auto r = parse_maps_line("00400000-00401000 rw-p 00000000 00:00 0");
  CHECK(r.path.empty());
  CHECK(is_special_region(r));
}

TEST_CASE("kernel padding before the path is a separator") {
  auto r = parse_maps_line(
      "7ffd1000-7ffd2000 r-xp 00000000 00:00 0                          [vdso]");
  CHECK(r.path == "[vdso]");
  auto s = parse_maps_line("00400000-00401000 r-xp 00000000 00:00 0 /opt/my app ");
  CHECK(s.path == "/opt/my app ");
}

TEST_CASE("malformed lines name the failing field") {
  auto field_of = [](const char* line) {
    try {
      parse_maps_line(line);
    } catch (const MapsParseError& e) {
      return e.field();
    }
    FAIL("parsed: " << line);
    return MapsField::kAddressPair;
  };
  CHECK(field_of("zzz bad line") == MapsField::kAddressPair);
  CHECK(field_of("") == MapsField::kAddressPair);
  CHECK(field_of("2000-1000 r-xp 0 00:00 0") == MapsField::kAddressPair);
  CHECK(field_of("1000-1000 r-xp 0 00:00 0") == MapsField::kAddressPair);
  CHECK(field_of("1000-2000 rwxq 0 00:00 0") == MapsField::kPerms);
  CHECK(field_of("1000-2000 r-x 0 00:00 0") == MapsField::kPerms);
  CHECK(field_of("1000-2000 r-xp 0g 00:00 0") == MapsField::kOffset);
  CHECK(field_of("1000-2000 r-xp 0 0000 0") == MapsField::kDevice);
  CHECK(field_of("1000-2000 r-xp 0 00:00 x1") == MapsField::kInode);
  CHECK(field_of("1000-2000 r-xp 0 00:00") == MapsField::kInode);
  CHECK(field_of("1-2-3 r-xp 0 00:00 0") == MapsField::kAddressPair);
  CHECK(field_of("ffffffffffffffffff-fffffffffffffffffff r-xp 0 00:00 0") ==
        MapsField::kAddressPair);
}

TEST_CASE("documents parse in order and report the failing line") {
  const char* three =
      "00400000-00401000 r-xp 00000000 00:00 0 /a\n"
      "00401000-00402000 r--p 00001000 00:00 0 /a\n"
      "00402000-00403000 rw-p 00000000 00:00 0\n";
  auto regions = parse_maps(three);
  REQUIRE(regions.size() == 3);
  CHECK(regions[0].start_addr == 0x400000);
  CHECK(regions[1].offset == 0x1000);
  CHECK(regions[2].path.empty());

  CHECK(parse_maps("").empty());

  std::string bad =
      "00400000-00401000 r-xp 00000000 00:00 0 /a\n"
      "00401000-00402000 r--p 00001000 00:00 0 /a\n"
      "garbage\n";
  try {
    parse_maps(bad);
    FAIL("expected an error");
  } catch (const MapsParseError& e) {
    CHECK(e.line_number() == 3);
    CHECK(e.line() == "garbage");
  }
}

TEST_CASE("special and hashable predicates") {
  MemoryRegion r;
  r.start_addr = 0x1000;
  r.end_addr = 0x2000;
  r.perms = Permissions{true, false, true, false};

  r.path = "[heap]";
  CHECK(is_special_region(r));
  r.path = "/opt/scada/bin/rtu";
  CHECK_FALSE(is_special_region(r));
  CHECK(is_hashable_region(r));
  r.path = "";
  CHECK(is_special_region(r));
  r.path = "[vdso]";
  CHECK_FALSE(is_hashable_region(r));
  r.path = "/usr/lib/libfoo.so (deleted)";
  CHECK(has_deleted_backing(r));
  CHECK(is_special_region(r));

  r.path = "/opt/scada/bin/rtu";
  r.perms = Permissions{true, true, false, false};
  CHECK_FALSE(is_hashable_region(r));
  r.perms = Permissions{false, false, true, false};
  CHECK_FALSE(is_hashable_region(r));
}

TEST_CASE("every region falls in exactly one class") {
  const char* paths[] = {"", "[heap]", "[stack]", "/lib/x.so", "/lib/y (deleted)",
                         "/dev/shm/tags", "[", "]"};
  for (int bits = 0; bits < 16; ++bits) {
    for (const char* path : paths) {
      MemoryRegion r;
      r.start_addr = 0;
      r.end_addr = 1;
      r.perms = Permissions{(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0,
                            (bits & 8) != 0};
      r.path = path;
      int hits = int(is_hashable_region(r)) + int(is_special_region(r)) +
                 int(!is_special_region(r) && !is_hashable_region(r));
      CHECK(hits == 1);
      RegionClass c = classify_region(r);
      CHECK((c == RegionClass::kHashable) == is_hashable_region(r));
      CHECK((c == RegionClass::kSpecial) == is_special_region(r));
    }
  }
}

TEST_CASE("rendering of generated fixtures round-trips") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    HostFixture f = generate_fixture(seed);
    SimulatedHost host(f);
    for (const auto& proc : f.processes) {
      std::vector<MemoryRegion> expected;
      for (const auto& m : proc.modules) expected.push_back(region_of(m));
      std::string doc = host.read_maps(proc.pid);
      auto parsed = parse_maps(doc);
      CHECK(parsed == expected);
      CHECK(render_maps(parsed) == doc);
      for (const auto& r : parsed) {
        CHECK(parse_maps_line(render_maps_line(r)) == r);
      }
    }
  }
}

TEST_CASE("corrupted lines never escape as anything but MapsParseError") {
  SeededRng rng(99);
  const std::string base =
      "7f2c4d600000-7f2c4d7a2000 r-xp 00000000 08:02 131242 /usr/lib/libc.so";
  const char alphabet[] = "0123456789abcdefxrwps-: \t[]\n\r";
  int ok = 0, rejected = 0;
  for (int i = 0; i < 5000; ++i) {
    std::string line = base;
    int edits = 1 + static_cast<int>(rng.below(4));
    for (int e = 0; e < edits; ++e) {
      if (line.empty()) line = "0";
      std::size_t pos = rng.below(line.size());
      switch (rng.below(3)) {
        case 0: line[pos] = alphabet[rng.below(sizeof alphabet - 1)]; break;
        case 1: line.erase(pos, 1 + rng.below(4)); break;
        default: line.insert(pos, 1, alphabet[rng.below(sizeof alphabet - 1)]);
      }
    }
    try {
      parse_maps(line);
      ++ok;
    } catch (const MapsParseError& e) {
      CHECK(e.line_number() >= 1);
      ++rejected;
    }
  }
  CHECK(ok + rejected == 5000);
  CHECK(rejected > 0);
}

}  // TEST_SUITE
