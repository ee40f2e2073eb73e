#include "hids/baseline_store.hpp"

#include <optional>

#include "hids/escape.hpp"
#include "hids/procmaps.hpp"

namespace hids {

namespace {

constexpr std::string_view kHeader = "HIDSBASE 1";

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  for (;;) {
    auto tab = line.find('\t');
    fields.push_back(line.substr(0, tab));
    if (tab == std::string_view::npos) break;
    line.remove_prefix(tab + 1);
  }
  return fields;
}

}  // namespace

void Baseline::add_process(const std::string& process) { processes_[process]; }

void Baseline::add_module(const std::string& process,
                          const std::string& module_path, const HashHex& hash) {
  processes_[process].module_hashes.emplace(module_path, hash);
}

void Baseline::whitelist_update(const std::string& process,
                                const std::string& module_path) {
  processes_[process].update_whitelist.insert(module_path);
}

bool Baseline::has_process(const std::string& process) const {
  return processes_.count(process) != 0;
}

const ProcessBaseline* Baseline::find(const std::string& process) const {
  auto it = processes_.find(process);
  return it == processes_.end() ? nullptr : &it->second;
}

const HashHex* Baseline::module_hash(const std::string& process,
                                     const std::string& module_path) const {
  const ProcessBaseline* p = find(process);
  if (p == nullptr) return nullptr;
  auto it = p->module_hashes.find(module_path);
  return it == p->module_hashes.end() ? nullptr : &it->second;
}

bool Baseline::is_whitelisted(const std::string& process,
                              const std::string& module_path) const {
  const ProcessBaseline* p = find(process);
  return p != nullptr && p->update_whitelist.count(module_path) != 0;
}

std::vector<std::string> Baseline::module_paths(const std::string& process) const {
  std::vector<std::string> out;
  if (const ProcessBaseline* p = find(process)) {
    for (const auto& [path, hash] : p->module_hashes) out.push_back(path);
  }
  return out;
}

SetupResult run_setup(Host& host) {
  SetupResult result;
  result.baseline.created_at_ms = host.now_ms();
  for (const ProcessRecord& proc : host.list_processes()) {
    if (!result.baseline.has_process(proc.name)) {
      result.log.push_back("New process found: " + proc.name);
    }
    result.baseline.add_process(proc.name);

    std::vector<MemoryRegion> regions;
    try {
      regions = parse_maps(host.read_maps(proc.pid));
    } catch (const std::exception& e) {
      result.warnings.push_back(proc.name + " (pid " + std::to_string(proc.pid) +
                                "): " + e.what());
      continue;
    }

    std::set<std::string> seen;
    for (const auto& region : regions) {
      if (is_special_region(region)) continue;
      if (!seen.insert(region.path).second) continue;
      try {
        ModuleDump dump = read_module_memory(host, proc, regions, region.path);
        result.baseline.add_module(proc.name, region.path, get_module_hash(dump));
      } catch (const HostError& e) {
        result.warnings.push_back(proc.name + " (pid " +
                                  std::to_string(proc.pid) + "): " + e.what());
      }
    }
  }
  return result;
}

std::string serialize_baseline(const Baseline& baseline, const SealKey& key) {
  std::string body(kHeader);
  body += '\n';
  for (const auto& [name, entry] : baseline.processes()) {
    body += "process\t" + escape_field(name) + "\n";
    for (const auto& [path, hash] : entry.module_hashes) {
      body += "module\t" + escape_field(path) + "\t" + hash.str() + "\n";
    }
    for (const auto& path : entry.update_whitelist) {
      body += "whitelist\t" + escape_field(path) + "\n";
    }
  }
  return seal_document(body, key);
}

Baseline deserialize_baseline(std::string_view document, const SealKey& key) {
  std::string_view body = open_sealed_document(document, key);

  Baseline baseline;
  std::size_t line_number = 0;
  auto format_error = [&](const std::string& what) {
    return StoreError(StoreErrorCode::kFormatError,
                      "FORMAT_ERROR: line " + std::to_string(line_number) +
                          ": " + what,
                      line_number);
  };
  auto field = [&](std::string_view raw) {
    auto value = unescape_field(raw);
    if (!value) throw format_error("bad escape sequence");
    return *value;
  };

  std::optional<std::string> process;
  std::optional<std::string> last_module;
  std::optional<std::string> last_whitelist;

  while (!body.empty()) {
    ++line_number;
    auto nl = body.find('\n');
    std::string_view line = body.substr(0, nl);
    body.remove_prefix(nl + 1);

    if (line_number == 1) {
      if (line != kHeader) throw format_error("expected 'HIDSBASE 1'");
      continue;
    }

    auto fields = split_tabs(line);
    std::string_view kind = fields[0];
    if (kind == "process") {
      if (fields.size() != 2) throw format_error("process takes 1 field");
      std::string name = field(fields[1]);
      if (name.empty()) throw format_error("empty process name");
      if (process && !(*process < name)) {
        throw format_error("process blocks out of order or duplicated");
      }
      process = name;
      last_module.reset();
      last_whitelist.reset();
      baseline.add_process(name);
    } else if (kind == "module") {
      if (!process) throw format_error("module outside a process block");
      if (fields.size() != 3) throw format_error("module takes 2 fields");
      if (last_whitelist) throw format_error("module after whitelist lines");
      std::string path = field(fields[1]);
      if (last_module && !(*last_module < path)) {
        throw format_error("modules out of order or duplicated");
      }
      auto hash = HashHex::parse(fields[2]);
      if (!hash) throw format_error("hash is not 64 lowercase hex chars");
      baseline.add_module(*process, path, *hash);
      last_module = path;
    } else if (kind == "whitelist") {
      if (!process) throw format_error("whitelist outside a process block");
      if (fields.size() != 2) throw format_error("whitelist takes 1 field");
      std::string path = field(fields[1]);
      if (last_whitelist && !(*last_whitelist < path)) {
        throw format_error("whitelist out of order or duplicated");
      }
      baseline.whitelist_update(*process, path);
      last_whitelist = path;
    } else {
      throw format_error("unknown record '" + std::string(kind) + "'");
    }
  }
  if (line_number == 0) {
    line_number = 1;
    throw format_error("missing header");
  }
  return baseline;
}

}  // namespace hids
