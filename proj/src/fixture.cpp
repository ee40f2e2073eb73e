#include "hids/fixture.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <set>

#include "hids/crypto.hpp"
#include "json.hpp"

namespace hids {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw FixtureError("fixture " + where + ": " + what);
}

void reject_unknown_fields(const json& obj, const std::string& where,
                           std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) fail(where, "expected an object");
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      fail(where + "." + item.key(), "unknown field");
    }
  }
}

const json& required(const json& obj, const std::string& where,
                     const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(where + "." + key, "missing required field");
  return *it;
}

std::string get_string(const json& value, const std::string& where) {
  if (!value.is_string()) fail(where, "expected a string");
  return value.get<std::string>();
}

std::int64_t get_int(const json& value, const std::string& where) {
  if (!value.is_number_integer()) fail(where, "expected an integer");
  if (value.is_number_unsigned() &&
      value.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
    fail(where, "integer out of range");
  }
  return value.get<std::int64_t>();
}

std::uint64_t get_uint(const json& value, const std::string& where) {
  if (!value.is_number_integer()) fail(where, "expected an integer");
  if (!value.is_number_unsigned() && value.get<std::int64_t>() < 0) {
    fail(where, "expected a non-negative integer");
  }
  return value.get<std::uint64_t>();
}

// Addresses and USB ids are hex strings with a mandatory 0x prefix.
std::uint64_t get_hex(const json& value, const std::string& where) {
  std::string s = get_string(value, where);
  if (s.size() < 3 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X')) {
    fail(where, "expected a 0x-prefixed hex string, got '" + s + "'");
  }
  std::uint64_t out = 0;
  const char* first = s.data() + 2;
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out, 16);
  if (ec != std::errc() || ptr != last) {
    fail(where, "invalid hex value '" + s + "'");
  }
  return out;
}

std::string hex_string(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string hex4(std::uint16_t v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "0x%04x", v);
  return buf;
}

ContentSpec parse_content(const json& value, const std::string& where) {
  if (value.is_string()) {
    std::string s = value.get<std::string>();
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    auto raw = from_hex(s);
    if (!raw) fail(where, "invalid hex content");
    return LiteralContent{Bytes(raw->begin(), raw->end())};
  }
  reject_unknown_fields(value, where, {"seed", "length"});
  GeneratedContent gen;
  gen.seed = get_uint(required(value, where, "seed"), where + ".seed");
  gen.length = get_uint(required(value, where, "length"), where + ".length");
  return gen;
}

FixtureModule parse_module(const json& value, const std::string& where) {
  reject_unknown_fields(value, where,
                        {"path", "perms", "start_addr", "end_addr", "content"});
  FixtureModule m;
  m.path = get_string(required(value, where, "path"), where + ".path");
  std::string perms =
      get_string(required(value, where, "perms"), where + ".perms");
  if (!parse_permissions(perms, m.perms)) {
    fail(where + ".perms", "expected [r-][w-][x-][ps], got '" + perms + "'");
  }
  m.start_addr =
      get_hex(required(value, where, "start_addr"), where + ".start_addr");
  m.end_addr = get_hex(required(value, where, "end_addr"), where + ".end_addr");
  if (auto it = value.find("content"); it != value.end()) {
    m.content = parse_content(*it, where + ".content");
  }
  return m;
}

std::vector<FixtureModule> parse_modules(const json& value,
                                         const std::string& where) {
  if (!value.is_array()) fail(where, "expected an array");
  std::vector<FixtureModule> modules;
  for (std::size_t i = 0; i < value.size(); ++i) {
    modules.push_back(
        parse_module(value[i], where + "[" + std::to_string(i) + "]"));
  }
  return modules;
}

std::uint16_t get_u16(const json& value, const std::string& where) {
  std::uint64_t v = get_hex(value, where);
  if (v > 0xffff) fail(where, "value exceeds 16 bits");
  return static_cast<std::uint16_t>(v);
}

FixtureUsbDevice parse_device(const json& value, const std::string& where) {
  reject_unknown_fields(value, where,
                        {"vendor_id", "product_id", "serial", "product",
                         "inserted_at_ms", "autorun_delay_ms", "payload"});
  FixtureUsbDevice d;
  d.vendor_id =
      get_u16(required(value, where, "vendor_id"), where + ".vendor_id");
  d.product_id =
      get_u16(required(value, where, "product_id"), where + ".product_id");
  if (auto it = value.find("serial"); it != value.end()) {
    d.serial = get_string(*it, where + ".serial");
  }
  if (auto it = value.find("product"); it != value.end()) {
    d.product = get_string(*it, where + ".product");
  }
  if (auto it = value.find("inserted_at_ms"); it != value.end()) {
    d.inserted_at_ms = get_int(*it, where + ".inserted_at_ms");
  }
  if (auto it = value.find("autorun_delay_ms"); it != value.end()) {
    d.autorun_delay_ms = get_int(*it, where + ".autorun_delay_ms");
  }
  if (auto it = value.find("payload"); it != value.end()) {
    std::string pw = where + ".payload";
    reject_unknown_fields(*it, pw, {"target", "spawn_pid", "modules"});
    UsbPayload p;
    p.target = get_string(required(*it, pw, "target"), pw + ".target");
    if (auto sp = it->find("spawn_pid"); sp != it->end()) {
      p.spawn_pid = get_int(*sp, pw + ".spawn_pid");
    }
    p.modules = parse_modules(required(*it, pw, "modules"), pw + ".modules");
    d.payload = std::move(p);
  }
  return d;
}

// Simulated regions are materialized in memory.
constexpr std::uint64_t kMaxRegionSize = 64ULL << 20;

bool has_control_chars(const std::string& s) {
  return s.find_first_of("\n\t\r") != std::string::npos;
}

void validate_modules(const std::vector<FixtureModule>& modules,
                      const std::string& where) {
  std::vector<std::pair<std::uint64_t, std::size_t>> order;
  for (std::size_t i = 0; i < modules.size(); ++i) {
    const auto& m = modules[i];
    std::string w = where + "[" + std::to_string(i) + "]";
    if (m.start_addr >= m.end_addr) {
      fail(w, "start_addr must be below end_addr");
    }
    if (m.path.find('\n') != std::string::npos) {
      fail(w + ".path", "path contains a newline");
    }
    if (!m.path.empty() && (m.path.front() == ' ' || m.path.front() == '\t')) {
      fail(w + ".path", "path starts with whitespace");
    }
    std::uint64_t size = m.end_addr - m.start_addr;
    if (size > kMaxRegionSize) fail(w, "region larger than 64 MiB");
    if (const auto* lit = std::get_if<LiteralContent>(&m.content)) {
      if (lit->bytes.size() > size) fail(w + ".content", "longer than region");
    } else if (const auto* gen = std::get_if<GeneratedContent>(&m.content)) {
      if (gen->length > size) fail(w + ".content", "longer than region");
    }
    order.emplace_back(m.start_addr, i);
  }
  std::sort(order.begin(), order.end());
  for (std::size_t k = 1; k < order.size(); ++k) {
    const auto& prev = modules[order[k - 1].second];
    const auto& cur = modules[order[k].second];
    if (cur.start_addr < prev.end_addr) {
      fail(where + "[" + std::to_string(order[k].second) + "]",
           "region overlaps " + where + "[" +
               std::to_string(order[k - 1].second) + "]");
    }
  }
}

json module_to_json(const FixtureModule& m) {
  json j = json::object();
  j["path"] = m.path;
  j["perms"] = to_string(m.perms);
  j["start_addr"] = hex_string(m.start_addr);
  j["end_addr"] = hex_string(m.end_addr);
  if (const auto* lit = std::get_if<LiteralContent>(&m.content)) {
    j["content"] = to_hex(lit->bytes);
  } else if (const auto* gen = std::get_if<GeneratedContent>(&m.content)) {
    j["content"] = json{{"seed", gen->seed}, {"length", gen->length}};
  }
  return j;
}

}  // namespace

Bytes generate_content(std::uint64_t seed, std::uint64_t length) {
  Bytes out;
  out.reserve(length);
  std::uint64_t state = seed;
  while (out.size() < length) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    for (int i = 0; i < 8 && out.size() < length; ++i) {
      out.push_back(static_cast<std::uint8_t>(z >> (8 * i)));
    }
  }
  return out;
}

HostFixture parse_fixture(std::string_view document) {
  json root;
  try {
    root = json::parse(document);
  } catch (const json::parse_error& e) {
    throw FixtureError(std::string("fixture: invalid JSON: ") + e.what());
  }
  reject_unknown_fields(root, "$", {"processes", "usb_devices", "clock_start_ms"});

  HostFixture fixture;
  fixture.clock_start_ms =
      get_int(required(root, "$", "clock_start_ms"), "$.clock_start_ms");

  const json& procs = required(root, "$", "processes");
  if (!procs.is_array()) fail("$.processes", "expected an array");
  for (std::size_t i = 0; i < procs.size(); ++i) {
    std::string where = "$.processes[" + std::to_string(i) + "]";
    reject_unknown_fields(procs[i], where, {"name", "pid", "modules"});
    FixtureProcess p;
    p.name = get_string(required(procs[i], where, "name"), where + ".name");
    p.pid = get_int(required(procs[i], where, "pid"), where + ".pid");
    p.modules = parse_modules(required(procs[i], where, "modules"),
                              where + ".modules");
    fixture.processes.push_back(std::move(p));
  }

  const json& devices = required(root, "$", "usb_devices");
  if (!devices.is_array()) fail("$.usb_devices", "expected an array");
  for (std::size_t i = 0; i < devices.size(); ++i) {
    fixture.usb_devices.push_back(
        parse_device(devices[i], "$.usb_devices[" + std::to_string(i) + "]"));
  }

  validate_fixture(fixture);
  return fixture;
}

void validate_fixture(const HostFixture& fixture) {
  std::map<Pid, std::size_t> pids;
  for (std::size_t i = 0; i < fixture.processes.size(); ++i) {
    const auto& p = fixture.processes[i];
    std::string where = "$.processes[" + std::to_string(i) + "]";
    if (p.pid <= 0) fail(where + ".pid", "pid must be positive");
    if (auto [it, fresh] = pids.emplace(p.pid, i); !fresh) {
      fail(where + ".pid", "duplicate pid " + std::to_string(p.pid) +
                               " (also at $.processes[" +
                               std::to_string(it->second) + "])");
    }
    if (p.name.empty()) fail(where + ".name", "name must not be empty");
    if (has_control_chars(p.name)) {
      fail(where + ".name", "name contains tab or newline");
    }
    validate_modules(p.modules, where + ".modules");
  }

  for (std::size_t i = 0; i < fixture.usb_devices.size(); ++i) {
    const auto& d = fixture.usb_devices[i];
    std::string where = "$.usb_devices[" + std::to_string(i) + "]";
    if (d.autorun_delay_ms < 0) {
      fail(where + ".autorun_delay_ms", "must be >= 0");
    }
    if (!d.payload) continue;
    const auto& payload = *d.payload;
    std::string pw = where + ".payload";
    if (payload.target.empty() || has_control_chars(payload.target)) {
      fail(pw + ".target", "invalid process name");
    }
    validate_modules(payload.modules, pw + ".modules");
    bool target_exists = std::any_of(
        fixture.processes.begin(), fixture.processes.end(),
        [&](const FixtureProcess& p) { return p.name == payload.target; });
    if (payload.spawn_pid) {
      if (*payload.spawn_pid <= 0) fail(pw + ".spawn_pid", "must be positive");
      if (pids.count(*payload.spawn_pid)) {
        fail(pw + ".spawn_pid", "duplicate pid " +
                                    std::to_string(*payload.spawn_pid));
      }
    } else if (!target_exists) {
      fail(pw + ".target", "no process named '" + payload.target +
                               "' and no spawn_pid given");
    }
  }
}

std::string fixture_to_json(const HostFixture& fixture) {
  json root = json::object();
  json procs = json::array();
  for (const auto& p : fixture.processes) {
    json jp = json::object();
    jp["name"] = p.name;
    jp["pid"] = p.pid;
    json mods = json::array();
    for (const auto& m : p.modules) mods.push_back(module_to_json(m));
    jp["modules"] = std::move(mods);
    procs.push_back(std::move(jp));
  }
  json devices = json::array();
  for (const auto& d : fixture.usb_devices) {
    json jd = json::object();
    jd["vendor_id"] = hex4(d.vendor_id);
    jd["product_id"] = hex4(d.product_id);
    jd["serial"] = d.serial;
    jd["product"] = d.product;
    if (d.inserted_at_ms) jd["inserted_at_ms"] = *d.inserted_at_ms;
    jd["autorun_delay_ms"] = d.autorun_delay_ms;
    if (d.payload) {
      json jp = json::object();
      jp["target"] = d.payload->target;
      if (d.payload->spawn_pid) jp["spawn_pid"] = *d.payload->spawn_pid;
      json mods = json::array();
      for (const auto& m : d.payload->modules) mods.push_back(module_to_json(m));
      jp["modules"] = std::move(mods);
      jd["payload"] = std::move(jp);
    }
    devices.push_back(std::move(jd));
  }
  root["processes"] = std::move(procs);
  root["usb_devices"] = std::move(devices);
  root["clock_start_ms"] = fixture.clock_start_ms;
  return root.dump(2) + "\n";
}

Bytes materialize_content(const FixtureModule& module) {
  Bytes out;
  if (const auto* lit = std::get_if<LiteralContent>(&module.content)) {
    out = lit->bytes;
  } else if (const auto* gen = std::get_if<GeneratedContent>(&module.content)) {
    out = generate_content(gen->seed, gen->length);
  }
  out.resize(module.end_addr - module.start_addr, 0);
  return out;
}

MemoryRegion region_of(const FixtureModule& module) {
  MemoryRegion r;
  r.start_addr = module.start_addr;
  r.end_addr = module.end_addr;
  r.perms = module.perms;
  r.path = module.path;
  return r;
}

}  // namespace hids
