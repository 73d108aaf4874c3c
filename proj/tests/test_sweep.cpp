#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "loraweb/scenario_io.hpp"
#include "loraweb/sweep.hpp"

using namespace loraweb;
using namespace loraweb::sim;

namespace {

const std::string kScenarios = LORAWEB_SCENARIO_DIR;

SweepSpec small_sweep() {
  auto spec = load_sweep(kScenarios + "/pdr_grid_sweep.yaml");
  spec.base.target_successes = 6;
  return spec;
}

}  // namespace

TEST_CASE("config ids and the CSV header") {
  CHECK(config_id({7, 500000}, 0.1) == "sf7-bw500-dc10");
  CHECK(config_id({12, 250000}, 1.0) == "sf12-bw250-dc100");
  CHECK(config_id({9, 125000}, 0.05) == "sf9-bw125-dc5");
  CHECK(metrics_csv_header() ==
        "config_id,sf,bw_hz,duty,requests_sent,requests_ok,pdr_pct,throughput_Bps,data_rate_Bps,"
        "mean_response_ms,mean_access_ms,collisions,retransmissions,cache_hits");
}

TEST_CASE("CSV row formatting") {
  SweepRow row;
  row.config_id = "sf7-bw250-dc10";
  row.spreading_factor = 7;
  row.bandwidth_hz = 250000;
  row.duty_cycle = 0.1;
  row.metrics.requests_sent = 94;
  row.metrics.requests_ok = 50;
  row.metrics.pdr_pct = compute_pdr(50, 94);
  row.metrics.throughput_Bps = 12.34567;
  row.metrics.data_rate_Bps = 20.0;
  row.metrics.mean_response_ms = 118.5;
  row.metrics.mean_access_ms = 949.0;
  row.metrics.collisions = 3;
  row.metrics.retransmissions = 7;
  CHECK(metrics_csv_row(row) == "sf7-bw250-dc10,7,250000,0.10,94,50,53.2,12.346,20.000,118.500,949.000,3,7,0");
  CHECK(metrics_csv({row}) == metrics_csv_header() + "\n" + metrics_csv_row(row) + "\n");
}

TEST_CASE("calibration entries: duty-specific values override config-wide ones") {
  SweepSpec spec;
  spec.base.pages.push_back({"index.html"});
  spec.base.clients.push_back({});
  spec.configs = {{7, 250000}, {9, 250000}};
  spec.duty_cycles = {0.1, 1.0};
  CalibrationEntry wide{{7, 250000}};
  wide.random_drop_probability = 0.2;
  wide.max_retry = 2;
  CalibrationEntry narrow{{7, 250000}, 1.0};
  narrow.random_drop_probability = 0.05;
  spec.calibration = {narrow, wide};  // order in the file does not matter
  spec.validate();

  const auto a = spec.scenario_for({7, 250000}, 0.1);
  CHECK(a.channel.random_drop_probability == 0.2);
  CHECK(a.arq.max_retry == 2);
  CHECK(a.radio.duty_cycle == 0.1);
  const auto b = spec.scenario_for({7, 250000}, 1.0);
  CHECK(b.channel.random_drop_probability == 0.05);
  CHECK(b.arq.max_retry == 2);
  const auto c = spec.scenario_for({9, 250000}, 1.0);
  CHECK(c.channel.random_drop_probability == spec.base.channel.random_drop_probability);
  CHECK(c.radio.spreading_factor == 9);

  spec.calibration.push_back({{10, 250000}});
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("the PDR grid sweep has sixteen rows in grid order") {
  const auto spec = small_sweep();
  CHECK(spec.configs.size() == 4);
  CHECK(spec.duty_cycles.size() == 4);
  const auto rows = run_sweep_serial(spec);
  REQUIRE(rows.size() == 16);
  CHECK(rows.front().config_id == "sf7-bw500-dc10");
  CHECK(rows[5].config_id == "sf7-bw250-dc30");
  CHECK(rows.back().config_id == "sf12-bw250-dc100");
  for (const auto& r : rows) {
    CHECK(r.metrics.requests_ok == 6);
    CHECK(r.metrics.pdr_pct > 0.0);
    CHECK(r.metrics.pdr_pct <= 100.0);
  }
}

TEST_CASE("parallel sweep equals the serial reference") {
  const auto spec = small_sweep();
  const auto serial = run_sweep_serial(spec);
  const auto parallel = run_sweep_parallel(spec);
  CHECK(serial == parallel);
  CHECK(metrics_csv(serial) == metrics_csv(parallel));
}

TEST_CASE("sweep JFI") {
  const auto rows = run_sweep_serial(small_sweep());
  const auto measured = sweep_jfi(rows);
  CHECK(measured.throughputs.size() == 4);
  CHECK(measured.jfi > 0.0);
  CHECK(measured.jfi <= 1.0);

  const auto fixed = sweep_jfi(rows, std::vector<double>{1.176415, 0.784716, 0.392857, 0.098039});
  CHECK(fixed.jfi == doctest::Approx(0.694).epsilon(0.001 / 0.694));
  CHECK_THROWS_AS(sweep_jfi(rows, std::vector<double>{1.0, 2.0}), ValidationError);

  const auto one = load_sweep(kScenarios + "/single_config_sweep.yaml");
  const auto one_rows = run_sweep_serial(one);
  CHECK(one_rows.size() == 1);
  CHECK(sweep_jfi(one_rows).jfi == 1.0);
  const auto csv = jfi_csv(sweep_jfi(one_rows));
  CHECK(csv.rfind("sf,bw_hz,throughput_Bps,jfi\n", 0) == 0);
}

TEST_CASE("scenario files load") {
  const auto base = load_scenario(kScenarios + "/fourclient_base.yaml");
  CHECK(base.clients.size() == 4);
  CHECK(base.clients[3].id == 4);
  CHECK_FALSE(base.clients[0].cache_enabled);
  CHECK(base.clients[0].schedule.min_gap_s == 8.0);
  CHECK(base.clients[0].schedule.max_gap_s == 25.0);
  CHECK(base.auto_low_data_rate);
  CHECK(base.target_successes == 50u);

  for (const char* name : {"fourclient_sf7bw500.yaml", "gateway.yaml"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_scenario(kScenarios + "/" + name).validate());
  }
  const auto cell = load_scenario(kScenarios + "/fourclient_sf7bw500.yaml");
  const auto r = run_scenario(cell);
  CHECK(r.metrics.requests_ok == 50);
  CHECK(r.metrics.pdr_pct == doctest::Approx(70.4).epsilon(0.005));
}

TEST_CASE("scenario parsing errors") {
  CHECK_THROWS_WITH_AS(load_scenario(kScenarios + "/bad_sf13.yaml"), doctest::Contains("spreading_factor out of range"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(load_scenario("/nonexistent/scenario.yaml"), doctest::Contains("cannot open file"), ConfigError);
  try {
    parse_scenario("name: x\nfoo: 1\nradio: {spreading_factor: 7, bogus: 2}\npages: [{name: a.html, colour: red}]\n"
                   "clients: {count: 1}\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("unknown keys") != std::string::npos);
    CHECK(msg.find("foo") != std::string::npos);
    CHECK(msg.find("radio.bogus") != std::string::npos);
    CHECK(msg.find("pages[0].colour") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_scenario("radio: {spreading_factor: seven}\npages: [{name: a.html}]\nclients: {count: 1}\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_scenario("radio: [1, 2]\n"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("pages: [{name: a.html}]\nclients: {count: 1, interval_s: [3]}\n"), ConfigError);
}

TEST_CASE("explicit client lists and page bodies") {
  const auto spec = parse_scenario(R"(
radio: {spreading_factor: 8, bandwidth_hz: 125000, low_data_rate_optimize: true}
network: {turnaround_ms: 2.5, duty_window_s: 30}
arq: {max_retry: 5, ack_timeout_s: 2}
pages:
  - {name: a.html, body: "<html>a</html>"}
  - {name: b.html, size: 600, versions: 3}
clients:
  - {id: 3, at_s: [1, 2, 3], pages: [a.html], cache: false}
  - {id: 9, interval_s: [1, 2], queue_limit: 4}
monitor: 9
)");
  CHECK(spec.radio.spreading_factor == 8);
  CHECK(spec.radio.low_data_rate_optimize);
  CHECK_FALSE(spec.auto_low_data_rate);
  CHECK(spec.network.turnaround == std::chrono::microseconds(2500));
  CHECK(spec.network.duty_window == std::chrono::seconds(30));
  CHECK(spec.arq_params().max_retry == 5);
  CHECK(spec.pages[0].body == std::string("<html>a</html>"));
  CHECK(spec.pages[1].versions == 3);
  CHECK(spec.clients[0].schedule.at_s.size() == 3);
  CHECK(spec.clients[1].queue_limit == 4);
  CHECK(spec.monitor == 9);
}

TEST_CASE("sweep files resolve the base scenario next to themselves") {
  const auto dir = std::filesystem::temp_directory_path() / "loraweb_sweep_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "base.yaml") << "pages: [{name: a.html}]\nclients: {count: 2}\n";
  std::ofstream(dir / "sweep.yaml") << "base_file: base.yaml\nspreading_factors: [7, 8]\nbandwidths_hz: [125000, 250000]\n"
                                       "duty_cycles: [1.0]\ntarget_successes: 3\nseed: 9\n";
  const auto spec = load_sweep((dir / "sweep.yaml").string());
  CHECK(spec.configs.size() == 4);
  CHECK(spec.base.clients.size() == 2);
  CHECK(spec.base.target_successes == 3u);
  CHECK(spec.base.seed == 9u);
  std::filesystem::remove_all(dir);
}
