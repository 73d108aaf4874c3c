#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "loraweb/gateway.hpp"
#include "loraweb/scenario_io.hpp"
#include "loraweb/sweep.hpp"

namespace fs = std::filesystem;
using namespace loraweb;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ValidationError("not a number in list: '" + item + "'");
    }
  }
  return out;
}

volatile std::sig_atomic_t g_stop = 0;
extern "C" void on_signal(int) { g_stop = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LoRaWeb simulator, sweeps and HTTP gateway"};
  app.require_subcommand(1);

  std::string scenario_path, sweep_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::string throughput_override;
  bool serial = false;

  auto* run = app.add_subcommand("run", "Run one scenario and write its event log and metrics");
  run->add_option("scenario", scenario_path, "Scenario file (YAML)")->required();
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "Run an SF x BW x duty-cycle grid");
  sweep->add_option("sweep", sweep_path, "Sweep file (YAML)")->required();
  sweep->add_option("--seed", seed, "Override the base scenario seed");
  sweep->add_option("--out", out_dir, "Output directory")->capture_default_str();
  sweep->add_option("--throughput-override", throughput_override,
                    "Comma-separated per-config throughputs used for the JFI instead of measured ones");
  sweep->add_flag("--serial", serial, "Run grid points one after another");

  int port = 8080;
  std::string host = "0.0.0.0";
  double time_scale = 1.0, stub_ping_ms = 87.0;
  bool tcp_ping = false;
  std::optional<unsigned> client_id;
  auto* serve = app.add_subcommand("serve", "Serve pages to browsers through a simulated client node");
  serve->add_option("scenario", scenario_path, "Scenario file providing radio, server pages and client")->required();
  serve->add_option("--port", port, "Listen port")->capture_default_str()->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "Listen address")->capture_default_str();
  serve->add_option("--seed", seed, "Override the scenario seed");
  serve->add_option("--client", client_id, "Attached client node id (default: the scenario monitor)");
  serve->add_option("--time-scale", time_scale, "Simulated seconds per wall second, 0 = as fast as possible")
      ->capture_default_str();
  serve->add_option("--stub-ping-ms", stub_ping_ms, "Latency of the stub ping backend")->capture_default_str();
  serve->add_flag("--tcp-ping", tcp_ping, "Ping real hosts with a TCP connect to port 80");

  std::string page_name, page_file, gateway_host = "127.0.0.1";
  auto* upload = app.add_subcommand("upload", "Upload a page to a running gateway");
  upload->add_option("name", page_name, "Page name")->required();
  upload->add_option("file", page_file, "File holding the page body")->required()->check(CLI::ExistingFile);
  upload->add_option("--port", port, "Gateway port")->capture_default_str();
  upload->add_option("--host", gateway_host, "Gateway address")->capture_default_str();

  std::string experiment_name;
  auto* experiment = app.add_subcommand("experiment", "Fixed experiments: packet-loss, access-delay");
  experiment->add_option("name", experiment_name, "packet-loss | access-delay")
      ->required()
      ->check(CLI::IsMember({"packet-loss", "access-delay"}));
  experiment->add_option("--seed", seed, "Channel seed (packet-loss)");
  experiment->add_option("--out", out_dir, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) {
      auto spec = sim::load_scenario(scenario_path);
      if (seed) spec.seed = *seed;
      const auto result = sim::run_scenario(spec);
      const auto row = sim::row_for(spec, result.metrics);
      const std::string csv = sim::metrics_csv({row});
      write_file(fs::path(out_dir) / "events.tsv", result.log.to_text());
      write_file(fs::path(out_dir) / "metrics.csv", csv);
      write_file(fs::path(out_dir) / "metrics.txt", sim::metrics_text(result.metrics));
      std::cout << csv;
      if (spec.target_successes && !result.target_reached)
        std::cerr << "warning: stopped at max_duration_s before " << *spec.target_successes << " successes\n";
      return kExitOk;
    }
    if (*sweep) {
      auto spec = sim::load_sweep(sweep_path);
      if (seed) spec.base.seed = *seed;
      std::optional<std::vector<double>> override_values;
      if (!throughput_override.empty()) override_values = parse_list(throughput_override);
      const auto rows = serial ? sim::run_sweep_serial(spec) : sim::run_sweep_parallel(spec);
      const auto jfi = sim::sweep_jfi(rows, override_values);
      const fs::path dir = spec.output_dir.empty() || app.get_subcommand("sweep")->count("--out") ? fs::path(out_dir)
                                                                                                    : fs::path(spec.output_dir);
      write_file(dir / "metrics.csv", sim::metrics_csv(rows));
      write_file(dir / "jfi.csv", sim::jfi_csv(jfi));
      write_file(dir / "sweep.dat", sim::gnuplot_data(rows));
      std::cout << sim::metrics_csv(rows) << "jfi," << jfi.jfi << "\n";
      return kExitOk;
    }
    if (*serve) {
      auto spec = sim::load_scenario(scenario_path);
      if (seed) spec.seed = *seed;
      gateway::GatewayConfig cfg;
      cfg.host = host;
      cfg.port = port;
      cfg.time_scale = time_scale;
      if (client_id) cfg.client = static_cast<NodeId>(*client_id);
      std::shared_ptr<nodes::PingBackend> ping;
      if (tcp_ping)
        ping = std::make_shared<nodes::TcpPingBackend>();
      else
        ping = std::make_shared<nodes::StubPingBackend>(
            std::chrono::duration_cast<Duration>(std::chrono::duration<double, std::milli>(stub_ping_ms)));
      gateway::Gateway gw(cfg, spec, ping);
      gw.start();
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving on http://" << host << ":" << gw.port() << "/ (client node "
                << int(cfg.client.value_or(spec.monitor)) << ")\n";
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
      gw.stop();
      return kExitOk;
    }
    if (*upload) {
      std::ifstream in(page_file, std::ios::binary);
      std::stringstream body;
      body << in.rdbuf();
      httplib::Client cli(gateway_host, port);
      const auto res = cli.Post("/admin/pages/" + page_name, body.str(), "text/html");
      if (!res) throw Error("cannot reach gateway at " + gateway_host + ":" + std::to_string(port));
      std::cout << res->body << "\n";
      if (res->status == 400) return kExitValidation;
      return res->status == 200 ? kExitOk : kExitRuntime;
    }
    if (*experiment) {
      if (experiment_name == "packet-loss") {
        std::string csv = "retransmit,sent,delivered,pdr_pct,retransmissions,data_frames\n";
        for (bool retx : {false, true}) {
          const auto r = sim::packet_loss_experiment(200, seed.value_or(3), 0.015, retx);
          csv += std::string(retx ? "on" : "off") + "," + std::to_string(r.sent) + "," + std::to_string(r.delivered) +
                 "," + std::to_string(r.pdr_pct) + "," + std::to_string(r.retransmissions) + "," +
                 std::to_string(r.data_frames) + "\n";
        }
        write_file(fs::path(out_dir) / "packet_loss.csv", csv);
        std::cout << csv;
      } else {
        radio::RadioConfig radio;
        radio.spreading_factor = 7;
        radio.bandwidth_hz = 500000;
        const auto points = sim::access_delay_experiment(radio, {1500, 3000, 4500, 6000, 7500, 10000});
        std::string csv = "page_bytes,chunks,access_ms,response_ms\n";
        for (const auto& p : points)
          csv += std::to_string(p.page_bytes) + "," + std::to_string(p.chunks) + "," + std::to_string(p.access_ms) +
                 "," + std::to_string(p.response_ms) + "\n";
        write_file(fs::path(out_dir) / "access_delay.csv", csv);
        std::cout << csv;
      }
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
