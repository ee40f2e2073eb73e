#include <doctest.h>

#include <cmath>

#include "hids/scenario.hpp"
#include "json.hpp"

using namespace hids;

TEST_SUITE("scenario") {

TEST_CASE("closed-form disable probability") {
  CHECK(analytic_disable_probability(100, 1000) == 0.95);
  CHECK(analytic_disable_probability(1000, 1000) == 0.5);
  CHECK(analytic_disable_probability(1e-9, 1000) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(analytic_disable_probability(1, 1000) > analytic_disable_probability(2, 1000));
  CHECK_THROWS_AS(analytic_disable_probability(0, 1000), ScenarioError);
  CHECK_THROWS_AS(analytic_disable_probability(2000, 1000), ScenarioError);
}

TEST_CASE("the closed form matches direct integration") {
  // Midpoint rule over T in [0, P): P(A > T) with A uniform on [0, D).
  for (auto [p, d] : {std::pair{100.0, 1000.0}, {250.0, 1000.0}, {30.0, 60.0}}) {
    const int n = 100000;
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      double t = (i + 0.5) * p / n;
      sum += (d - t) / d;
    }
    CHECK(sum / n == doctest::Approx(analytic_disable_probability(p, d)).epsilon(1e-9));
  }
}

TEST_CASE("scenario 1: every device detected, disable rate near the closed form") {
  ScenarioReport r = run_scenario_usb_insertion(100, 1, 100, 1000);
  CHECK(r.detected == 100);
  CHECK(r.disable_rate() >= 0.88);
  CHECK(r.disable_rate() <= 1.0);
  // Payloads that won the race are caught by the next sweep.
  CHECK(r.payloads_fired == r.trials - r.disabled);
  CHECK(r.fired_payloads_caught == r.payloads_fired);
}

TEST_CASE("scenario 1 follows other timing parameters") {
  ScenarioReport r = run_scenario_usb_insertion(2000, 5, 500, 1000);
  CHECK(r.detected == 2000);
  // Integer-millisecond latency: expectation 1 - (P + 1) / (2D).
  CHECK(r.disable_rate() == doctest::Approx(1.0 - 501.0 / 2000.0).epsilon(0.04));
  CHECK_THROWS_AS(run_scenario_usb_insertion(10, 1, 0, 1000), ScenarioError);
  CHECK_THROWS_AS(run_scenario_usb_insertion(0, 1, 100, 1000), ScenarioError);
}

TEST_CASE("scenarios 2 and 3 detect every trial for many seeds") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CHECK(run_scenario_downloaded_malware(40, seed).detected == 40);
    CHECK(run_scenario_usb_bypass(40, seed).detected == 40);
    CHECK(run_scenario_usb_insertion(40, seed, 100, 1000).detected == 40);
  }
}

TEST_CASE("negative controls are not detected") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    HostFixture f = generate_fixture(seed);
    SeededRng rng(seed);
    MalwareTrial writable = run_malware_trial(f, rng, MutationTarget::kWritable, 0x5a);
    CHECK(writable.content_changed);
    CHECK_FALSE(writable.detected);
    MalwareTrial same = run_malware_trial(f, rng, MutationTarget::kExecutable, 0);
    CHECK_FALSE(same.content_changed);
    CHECK_FALSE(same.detected);
  }
}

TEST_CASE("injection variants map to their finding codes") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    HostFixture f = generate_fixture(seed);
    SeededRng rng(seed);
    auto fresh = run_injection_trial(f, rng, InjectionKind::kNewModule);
    CHECK(fresh.expected == FindingCode::kModuleUnknown);
    CHECK(fresh.detected);
    auto existing = run_injection_trial(f, rng, InjectionKind::kExistingPath);
    CHECK(existing.expected == FindingCode::kModuleHashMismatch);
    CHECK(existing.detected);
    auto process = run_injection_trial(f, rng, InjectionKind::kNewProcess);
    CHECK(process.expected == FindingCode::kProcessUnknown);
    CHECK(process.detected);
  }
}

TEST_CASE("reports are reproducible byte for byte") {
  for (Scenario s : {Scenario::kUsbInsertion, Scenario::kDownloadedMalware,
                     Scenario::kUsbBypass}) {
    std::string a = report_to_json(run_scenario(s, 30, 42));
    std::string b = report_to_json(run_scenario(s, 30, 42));
    CHECK(a == b);
    auto j = nlohmann::json::parse(a);
    CHECK(j["trials"] == 30);
    CHECK(j["seed"] == 42);
    CHECK(j["scenario"] == to_string(s));
  }
  CHECK(report_to_json(run_scenario(Scenario::kUsbInsertion, 30, 1)) !=
        report_to_json(run_scenario(Scenario::kUsbInsertion, 30, 2)));
}

TEST_CASE("generated fixtures are reproducible and varied") {
  CHECK(generate_fixture(8) == generate_fixture(8));
  CHECK_FALSE(generate_fixture(8) == generate_fixture(9));
  GeneratorOptions bare;
  bare.special_regions = false;
  bare.usb_devices = false;
  HostFixture f = generate_fixture(3, bare);
  CHECK(f.usb_devices.empty());
  for (const auto& p : f.processes) {
    for (const auto& m : p.modules) CHECK_FALSE(m.path.empty());
  }
}

TEST_CASE("bounded draws") {
  SeededRng rng(1);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) ++hist[rng.below(7)];
  for (int h : hist) CHECK(std::abs(h - 10000) < 500);
  for (int i = 0; i < 1000; ++i) {
    auto v = rng.between(-3, 3);
    CHECK(v >= -3);
    CHECK(v <= 3);
  }
  CHECK(SeededRng(5).next() == SeededRng(5).next());
  CHECK(parse_scenario("s2") == Scenario::kDownloadedMalware);
  CHECK_FALSE(parse_scenario("s4"));
}

}  // TEST_SUITE
