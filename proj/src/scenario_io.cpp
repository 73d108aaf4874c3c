#include "loraweb/scenario_io.hpp"

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace loraweb::sim {

namespace {

// Collects unknown keys across the whole document so the error lists all of them.
class Reader {
 public:
  void check_keys(const YAML::Node& node, const std::string& path, std::initializer_list<std::string_view> allowed) {
    if (!node.IsMap()) throw ConfigError(label(path) + " must be a mapping");
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        unknown_.push_back(path.empty() ? key : path + "." + key);
    }
  }

  void finish() const {
    if (unknown_.empty()) return;
    std::string msg = "unknown keys in scenario file:";
    for (const auto& k : unknown_) msg += " " + k;
    throw ConfigError(msg);
  }

  template <typename T>
  T get(const YAML::Node& node, const std::string& path) const {
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(label(path) + ": invalid value '" + YAML::Dump(node) + "'");
    }
  }

  template <typename T>
  void maybe(const YAML::Node& parent, const char* key, const std::string& path, T& out) const {
    if (const auto n = parent[key]) out = get<T>(n, join(path, key));
  }
  template <typename T>
  void maybe(const YAML::Node& parent, const char* key, const std::string& path, std::optional<T>& out) const {
    if (const auto n = parent[key]) out = get<T>(n, join(path, key));
  }

  static std::string join(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
  }
  static std::string label(const std::string& path) { return path.empty() ? "document" : path; }

 private:
  std::vector<std::string> unknown_;
};

Duration ms(double v) { return Duration(static_cast<Duration::rep>(std::llround(v * 1e6))); }
Duration secs(double v) { return Duration(static_cast<Duration::rep>(std::llround(v * 1e9))); }

void read_radio(Reader& rd, const YAML::Node& n, ScenarioSpec& spec) {
  rd.check_keys(n, "radio", {"spreading_factor", "bandwidth_hz", "coding_rate", "preamble_symbols", "tx_power_dbm",
                             "duty_cycle", "explicit_header", "low_data_rate_optimize", "crc"});
  auto& r = spec.radio;
  rd.maybe(n, "spreading_factor", "radio", r.spreading_factor);
  rd.maybe(n, "bandwidth_hz", "radio", r.bandwidth_hz);
  rd.maybe(n, "coding_rate", "radio", r.coding_rate_denominator);
  rd.maybe(n, "preamble_symbols", "radio", r.preamble_symbols);
  rd.maybe(n, "tx_power_dbm", "radio", r.tx_power_dbm);
  rd.maybe(n, "duty_cycle", "radio", r.duty_cycle);
  rd.maybe(n, "explicit_header", "radio", r.explicit_header);
  rd.maybe(n, "crc", "radio", r.crc_on);
  if (const auto ldro = n["low_data_rate_optimize"]) {
    if (ldro.IsScalar() && ldro.Scalar() == "auto") {
      spec.auto_low_data_rate = true;
    } else {
      r.low_data_rate_optimize = rd.get<bool>(ldro, "radio.low_data_rate_optimize");
      spec.auto_low_data_rate = false;
    }
  }
}

void read_channel(Reader& rd, const YAML::Node& n, radio::ChannelModel& c) {
  rd.check_keys(n, "channel", {"random_drop_probability", "drop_control_frames", "base_rssi_dbm", "rssi_spread_dbm"});
  rd.maybe(n, "random_drop_probability", "channel", c.random_drop_probability);
  rd.maybe(n, "drop_control_frames", "channel", c.drop_control_frames);
  rd.maybe(n, "base_rssi_dbm", "channel", c.base_rssi_dbm);
  rd.maybe(n, "rssi_spread_dbm", "channel", c.rssi_spread_dbm);
}

void read_network(Reader& rd, const YAML::Node& n, radio::NetworkOptions& o) {
  rd.check_keys(n, "network", {"turnaround_ms", "processing_ms", "duty_window_s"});
  if (const auto v = n["turnaround_ms"]) o.turnaround = ms(rd.get<double>(v, "network.turnaround_ms"));
  if (const auto v = n["processing_ms"]) o.processing = ms(rd.get<double>(v, "network.processing_ms"));
  if (const auto v = n["duty_window_s"]) o.duty_window = secs(rd.get<double>(v, "network.duty_window_s"));
}

void read_arq(Reader& rd, const YAML::Node& n, ArqOverrides& a) {
  rd.check_keys(n, "arq", {"max_retry", "ack_timeout_s", "receive_timeout_s", "first_response_timeout_s"});
  rd.maybe(n, "max_retry", "arq", a.max_retry);
  rd.maybe(n, "ack_timeout_s", "arq", a.ack_timeout_s);
  rd.maybe(n, "receive_timeout_s", "arq", a.receive_timeout_s);
  rd.maybe(n, "first_response_timeout_s", "arq", a.first_response_timeout_s);
}

void read_interval(Reader& rd, const YAML::Node& n, const std::string& path, ScheduleSpec& s) {
  const auto v = rd.get<std::vector<double>>(n, path);
  if (v.size() != 2) throw ConfigError(path + " must be [min, max]");
  s.min_gap_s = v[0];
  s.max_gap_s = v[1];
}

ClientSpec read_client(Reader& rd, const YAML::Node& n, const std::string& path) {
  rd.check_keys(n, path, {"id", "interval_s", "at_s", "pages", "cache", "queue_limit"});
  ClientSpec c;
  if (const auto v = n["id"]) c.id = static_cast<NodeId>(rd.get<unsigned>(v, path + ".id"));
  if (const auto v = n["interval_s"]) read_interval(rd, v, path + ".interval_s", c.schedule);
  rd.maybe(n, "at_s", path, c.schedule.at_s);
  rd.maybe(n, "pages", path, c.pages);
  rd.maybe(n, "cache", path, c.cache_enabled);
  rd.maybe(n, "queue_limit", path, c.queue_limit);
  return c;
}

void read_clients(Reader& rd, const YAML::Node& n, ScenarioSpec& spec) {
  spec.clients.clear();
  if (n.IsSequence()) {
    for (std::size_t i = 0; i < n.size(); ++i) spec.clients.push_back(read_client(rd, n[i], "clients[" + std::to_string(i) + "]"));
    return;
  }
  // Shorthand: `count` identical clients with consecutive ids.
  rd.check_keys(n, "clients", {"count", "first_id", "interval_s", "pages", "cache", "queue_limit"});
  const auto count = n["count"] ? rd.get<unsigned>(n["count"], "clients.count") : 1u;
  const auto first = n["first_id"] ? rd.get<unsigned>(n["first_id"], "clients.first_id") : 1u;
  ClientSpec proto;
  if (const auto v = n["interval_s"]) read_interval(rd, v, "clients.interval_s", proto.schedule);
  rd.maybe(n, "pages", "clients", proto.pages);
  rd.maybe(n, "cache", "clients", proto.cache_enabled);
  rd.maybe(n, "queue_limit", "clients", proto.queue_limit);
  if (first + count > 256) throw ConfigError("clients: node ids must fit in one byte");
  for (unsigned i = 0; i < count; ++i) {
    ClientSpec c = proto;
    c.id = static_cast<NodeId>(first + i);
    spec.clients.push_back(std::move(c));
  }
}

void read_pages(Reader& rd, const YAML::Node& n, ScenarioSpec& spec) {
  if (!n.IsSequence()) throw ConfigError("pages must be a list");
  spec.pages.clear();
  for (std::size_t i = 0; i < n.size(); ++i) {
    const std::string path = "pages[" + std::to_string(i) + "]";
    rd.check_keys(n[i], path, {"name", "size", "body", "versions"});
    PageSpec p;
    if (!n[i]["name"]) throw ConfigError(path + ".name is required");
    p.name = rd.get<std::string>(n[i]["name"], path + ".name");
    rd.maybe(n[i], "size", path, p.size);
    rd.maybe(n[i], "body", path, p.body);
    rd.maybe(n[i], "versions", path, p.versions);
    spec.pages.push_back(std::move(p));
  }
}

void read_scenario_into(Reader& rd, const YAML::Node& doc, ScenarioSpec& spec) {
  rd.check_keys(doc, "", {"name", "seed", "radio", "channel", "network", "arq", "server", "clients", "pages", "monitor",
                          "stop"});
  rd.maybe(doc, "name", "", spec.name);
  rd.maybe(doc, "seed", "", spec.seed);
  if (const auto n = doc["radio"]) read_radio(rd, n, spec);
  if (const auto n = doc["channel"]) read_channel(rd, n, spec.channel);
  if (const auto n = doc["network"]) read_network(rd, n, spec.network);
  if (const auto n = doc["arq"]) read_arq(rd, n, spec.arq);
  if (const auto n = doc["server"]) {
    rd.check_keys(n, "server", {"id"});
    if (n["id"]) spec.server = static_cast<NodeId>(rd.get<unsigned>(n["id"], "server.id"));
  }
  if (const auto n = doc["clients"]) read_clients(rd, n, spec);
  if (const auto n = doc["pages"]) read_pages(rd, n, spec);
  if (const auto n = doc["monitor"]) spec.monitor = static_cast<NodeId>(rd.get<unsigned>(n, "monitor"));
  if (const auto n = doc["stop"]) {
    rd.check_keys(n, "stop", {"target_successes", "max_duration_s"});
    rd.maybe(n, "target_successes", "stop", spec.target_successes);
    rd.maybe(n, "max_duration_s", "stop", spec.max_duration_s);
  }
}

YAML::Node parse_yaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed scenario file: ") + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path + " (file not found or unreadable)");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ScenarioSpec parse_scenario(const std::string& text) {
  const YAML::Node doc = parse_yaml(text);
  Reader rd;
  ScenarioSpec spec;
  read_scenario_into(rd, doc, spec);
  rd.finish();
  spec.validate();
  return spec;
}

ScenarioSpec load_scenario(const std::string& path) { return parse_scenario(read_file(path)); }

SweepSpec parse_sweep(const std::string& text, const std::string& base_dir) {
  const YAML::Node doc = parse_yaml(text);
  Reader rd;
  rd.check_keys(doc, "", {"base", "base_file", "configs", "spreading_factors", "bandwidths_hz", "duty_cycles",
                          "calibration", "output_dir", "seed", "target_successes"});
  SweepSpec sweep;
  if (doc["base"] && doc["base_file"]) throw ConfigError("use either base or base_file, not both");
  if (const auto n = doc["base_file"]) {
    const std::filesystem::path p = std::filesystem::path(base_dir) / rd.get<std::string>(n, "base_file");
    const YAML::Node base = parse_yaml(read_file(p.string()));
    read_scenario_into(rd, base, sweep.base);
  } else if (const auto b = doc["base"]) {
    read_scenario_into(rd, b, sweep.base);
  }
  rd.maybe(doc, "seed", "", sweep.base.seed);
  rd.maybe(doc, "target_successes", "", sweep.base.target_successes);

  if (const auto n = doc["configs"]) {
    if (!n.IsSequence()) throw ConfigError("configs must be a list");
    for (std::size_t i = 0; i < n.size(); ++i) {
      const std::string path = "configs[" + std::to_string(i) + "]";
      rd.check_keys(n[i], path, {"spreading_factor", "bandwidth_hz"});
      RadioPoint p;
      rd.maybe(n[i], "spreading_factor", path, p.spreading_factor);
      rd.maybe(n[i], "bandwidth_hz", path, p.bandwidth_hz);
      sweep.configs.push_back(p);
    }
  }
  if (doc["spreading_factors"] || doc["bandwidths_hz"]) {
    if (doc["configs"]) throw ConfigError("use either configs or spreading_factors x bandwidths_hz, not both");
    std::vector<int> sfs{sweep.base.radio.spreading_factor};
    std::vector<std::uint32_t> bws{sweep.base.radio.bandwidth_hz};
    rd.maybe(doc, "spreading_factors", "", sfs);
    rd.maybe(doc, "bandwidths_hz", "", bws);
    for (int sf : sfs)
      for (auto bw : bws) sweep.configs.push_back({sf, bw});
  }
  if (sweep.configs.empty())
    sweep.configs.push_back({sweep.base.radio.spreading_factor, sweep.base.radio.bandwidth_hz});
  rd.maybe(doc, "duty_cycles", "", sweep.duty_cycles);
  if (sweep.duty_cycles.empty()) sweep.duty_cycles.push_back(sweep.base.radio.duty_cycle);

  if (const auto n = doc["calibration"]) {
    if (!n.IsSequence()) throw ConfigError("calibration must be a list");
    for (std::size_t i = 0; i < n.size(); ++i) {
      const std::string path = "calibration[" + std::to_string(i) + "]";
      rd.check_keys(n[i], path, {"spreading_factor", "bandwidth_hz", "duty_cycle", "random_drop_probability",
                                 "max_retry", "duty_window_s", "first_response_timeout_s"});
      CalibrationEntry e;
      rd.maybe(n[i], "spreading_factor", path, e.point.spreading_factor);
      rd.maybe(n[i], "bandwidth_hz", path, e.point.bandwidth_hz);
      rd.maybe(n[i], "duty_cycle", path, e.duty_cycle);
      rd.maybe(n[i], "random_drop_probability", path, e.random_drop_probability);
      rd.maybe(n[i], "max_retry", path, e.max_retry);
      rd.maybe(n[i], "duty_window_s", path, e.duty_window_s);
      rd.maybe(n[i], "first_response_timeout_s", path, e.first_response_timeout_s);
      sweep.calibration.push_back(e);
    }
  }
  rd.maybe(doc, "output_dir", "", sweep.output_dir);
  rd.finish();
  sweep.validate();
  return sweep;
}

SweepSpec load_sweep(const std::string& path) {
  const std::string dir = std::filesystem::path(path).parent_path().string();
  return parse_sweep(read_file(path), dir.empty() ? "." : dir);
}

}  // namespace loraweb::sim
