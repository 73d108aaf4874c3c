#include "loraweb/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace loraweb::sim {

namespace {

Duration seconds_to_duration(double s) { return Duration(static_cast<Duration::rep>(std::llround(s * 1e9))); }

double to_ms(Duration d) { return static_cast<double>(d.count()) / 1e6; }

}  // namespace

// --- spec -----------------------------------------------------------------------

radio::RadioConfig ScenarioSpec::effective_radio() const {
  radio::RadioConfig r = radio;
  if (auto_low_data_rate && r.bandwidth_hz > 0 && r.spreading_factor > 0 && r.spreading_factor < 31)
    r.low_data_rate_optimize = (std::uint64_t{1} << r.spreading_factor) * 1000 >= std::uint64_t{16} * r.bandwidth_hz;
  return r;
}

void ScenarioSpec::validate() const {
  const radio::RadioConfig radio = effective_radio();
  radio.validate();
  channel.validate();
  if (clients.empty()) throw ConfigError("clients: at least one client is required");
  if (pages.empty()) throw ConfigError("pages: at least one page is required");
  std::set<NodeId> ids{server};
  for (const auto& c : clients) {
    if (!ids.insert(c.id).second) throw ConfigError("clients: duplicate node id " + std::to_string(c.id));
    const auto& s = c.schedule;
    if (s.explicit_times()) {
      for (double t : s.at_s)
        if (!(t >= 0.0)) throw ConfigError("clients.schedule: request times must be >= 0");
    } else if (!(s.min_gap_s > 0.0) || !(s.max_gap_s >= s.min_gap_s)) {
      throw ConfigError("clients.schedule: interval must satisfy 0 < min <= max");
    }
    if (c.queue_limit == 0) throw ConfigError("clients.queue_limit must be positive");
    for (const auto& name : c.pages) {
      if (std::none_of(pages.begin(), pages.end(), [&](const PageSpec& p) { return p.name == name; }))
        throw ConfigError("clients.pages: unknown page '" + name + "'");
    }
  }
  if (std::none_of(clients.begin(), clients.end(), [&](const ClientSpec& c) { return c.id == monitor; }))
    throw ConfigError("monitor: node " + std::to_string(monitor) + " is not a client");
  std::size_t largest = 0;
  for (const auto& p : pages) {
    cache::validate_page_name(p.name);
    if (p.versions == 0) throw ConfigError("pages.versions must be >= 1");
    const std::size_t size = p.body ? p.body->size() : p.size;
    if (size == 0) throw ConfigError("pages.size must be positive");
    largest = std::max({largest, size, p.name.size()});
  }
  if (target_successes && *target_successes == 0) throw ConfigError("stop.target_successes must be positive");
  if (!(max_duration_s > 0.0)) throw ConfigError("stop.max_duration_s must be positive");
  if (network.duty_window <= Duration::zero()) throw ConfigError("network.duty_window_s must be positive");

  if (radio.duty_cycle < 1.0) {
    const std::size_t frame = framing::kHeaderSize + std::min(largest, framing::kMaxPayload);
    const Duration toa = radio::time_on_air(radio, frame);
    const auto allowance = static_cast<double>(network.duty_window.count()) * radio.duty_cycle;
    if (static_cast<double>(toa.count()) > allowance)
      throw ConfigError("duty cycle unsatisfiable: a " + std::to_string(frame) + " B frame needs " +
                        std::to_string(to_ms(toa)) + " ms of airtime but duty_cycle " +
                        std::to_string(radio.duty_cycle) + " allows " + std::to_string(allowance / 1e6) +
                        " ms per " + std::to_string(to_ms(network.duty_window) / 1e3) + " s window");
  }
  arq_params().validate();
}

transfer::ArqParams ScenarioSpec::arq_params() const {
  transfer::ArqParams p = transfer::default_arq_params(effective_radio(), network);
  if (arq.max_retry) p.max_retry = *arq.max_retry;
  if (arq.ack_timeout_s) p.ack_timeout = seconds_to_duration(*arq.ack_timeout_s);
  if (arq.receive_timeout_s) {
    p.receive_timeout = seconds_to_duration(*arq.receive_timeout_s);
    p.linger = p.receive_timeout;
    p.first_response_timeout = p.receive_timeout;
  }
  if (arq.first_response_timeout_s) p.first_response_timeout = seconds_to_duration(*arq.first_response_timeout_s);
  return p;
}

Bytes make_page_body(std::size_t size, std::uint64_t seed) {
  static constexpr std::string_view kHead = "<html><body>";
  static constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyz ";
  const std::string_view kw = framing::kTerminalKeyword;
  if (size < kw.size()) throw ValidationError("page size " + std::to_string(size) + " is below the terminal keyword");
  radio::Rng rng(radio::derive_seed(seed, 7));
  Bytes body;
  body.reserve(size);
  for (char c : kHead)
    if (body.size() + kw.size() < size) body.push_back(static_cast<std::uint8_t>(c));
  while (body.size() + kw.size() < size) body.push_back(static_cast<std::uint8_t>(kAlphabet[rng.index(kAlphabet.size())]));
  body.insert(body.end(), kw.begin(), kw.end());
  return body;
}

// --- metrics --------------------------------------------------------------------

double compute_pdr(std::size_t delivered, std::size_t total) {
  if (total == 0) throw ValidationError("PDR undefined: no packets sent");
  if (delivered > total) throw ValidationError("PDR: delivered exceeds total");
  return static_cast<double>(delivered) / static_cast<double>(total) * 100.0;
}

double compute_jfi(const std::vector<double>& xs) {
  if (xs.empty()) throw ValidationError("JFI needs at least one throughput");
  double sum = 0.0, sum_sq = 0.0;
  for (double x : xs) {
    if (!(x > 0.0)) throw ValidationError("JFI throughputs must be positive");
    sum += x;
    sum_sq += x * x;
  }
  return (sum * sum) / (static_cast<double>(xs.size()) * sum_sq);
}

MetricsReport aggregate_metrics(const std::vector<nodes::RequestReport>& requests, const ChannelCounts& counts,
                                SimTime end) {
  MetricsReport m;
  Duration busy{}, access_sum{}, response_sum{};
  std::size_t bytes = 0, with_response = 0;
  for (const auto& r : requests) {
    if (r.is_ping) continue;
    ++m.requests_sent;
    if (r.emitted && r.completed) busy += *r.completed - *r.emitted;
    if (r.status == 200) {
      ++m.requests_ok;
      bytes += r.bytes;
      if (r.source == cache::Source::cache_hit) ++m.cache_hits;
      if (r.emitted && r.completed) {
        const Duration access = *r.completed - *r.emitted;
        access_sum += access;
        m.max_access_ms = std::max(m.max_access_ms, to_ms(access));
      }
      if (r.emitted && r.first_rx) {
        const Duration resp = *r.first_rx - *r.emitted;
        response_sum += resp;
        ++with_response;
        m.max_response_ms = std::max(m.max_response_ms, to_ms(resp));
      }
    } else if (r.status == 404) {
      ++m.requests_not_found;
    } else {
      ++m.requests_failed;
    }
  }
  if (m.requests_sent > 0) m.pdr_pct = compute_pdr(m.requests_ok, m.requests_sent);
  if (m.requests_ok > 0) m.mean_access_ms = to_ms(access_sum) / static_cast<double>(m.requests_ok);
  if (with_response > 0) m.mean_response_ms = to_ms(response_sum) / static_cast<double>(with_response);
  if (busy > Duration::zero()) m.throughput_Bps = static_cast<double>(bytes) / (to_ms(busy) / 1e3);
  if (access_sum > Duration::zero()) m.data_rate_Bps = static_cast<double>(bytes) / (to_ms(access_sum) / 1e3);
  m.frames_sent = counts.frames_sent;
  m.frames_delivered = counts.frames_delivered;
  if (counts.frames_sent > 0) m.frame_pdr_pct = compute_pdr(counts.frames_delivered, counts.frames_sent);
  m.collisions = counts.collisions;
  m.retransmissions = counts.retransmissions;
  m.cache_hits += counts.cache_served;
  m.sim_duration_s = static_cast<double>(end.count()) / 1e9;
  return m;
}

std::vector<nodes::RequestReport> request_reports(const EventLog& log, NodeId client) {
  std::vector<nodes::RequestReport> out;
  std::map<std::uint64_t, std::size_t> open;
  auto req_of = [](const LogRecord& r) { return std::stoull(field_value(r.fields, "req").value_or("0")); };
  for (const auto& r : log.records()) {
    if (r.node != client) continue;
    if (r.event == "req_begin") {
      nodes::RequestReport rep;
      rep.request_id = req_of(r);
      rep.client = client;
      rep.begin = r.time;
      open[rep.request_id] = out.size();
      out.push_back(std::move(rep));
      continue;
    }
    if (r.event != "req_emit" && r.event != "first_rx" && r.event != "req_done" && r.event != "station_free") continue;
    auto it = open.find(req_of(r));
    if (it == open.end()) continue;
    auto& rep = out[it->second];
    if (r.event == "req_emit") {
      rep.emitted = r.time;
    } else if (r.event == "first_rx") {
      rep.first_rx = r.time;
    } else if (r.event == "req_done") {
      rep.completed = r.time;
      rep.is_ping = field_value(r.fields, "kind") == "ping";
      rep.key = field_value(r.fields, rep.is_ping ? "host" : "url").value_or("");
      const auto outcome = field_value(r.fields, "outcome").value_or("failure");
      rep.status = outcome == "success" ? 200 : (outcome == "not_found" ? 404 : 504);
      rep.source = field_value(r.fields, "source") == "cache_hit" ? cache::Source::cache_hit : cache::Source::fetched;
      rep.bytes = std::stoull(field_value(r.fields, "bytes").value_or("0"));
    } else {
      rep.released = r.time;
      open.erase(it);
    }
  }
  // Exchanges still running when the log ends are not counted.
  std::vector<nodes::RequestReport> closed;
  for (auto& rep : out)
    if (!open.contains(rep.request_id)) closed.push_back(std::move(rep));
  return closed;
}

MetricsReport metrics_from_log(const EventLog& log, NodeId monitor) {
  ChannelCounts counts;
  for (const auto& r : log.records()) {
    if (r.event == "tx_start") {
      ++counts.frames_sent;
    } else if (r.event == "tx_end") {
      if (r.outcome == "delivered") ++counts.frames_delivered;
      if (r.outcome == "lost_collision") ++counts.collisions;
    } else if (r.event == "transfer_end" || r.event == "transfer_restart") {
      counts.retransmissions += std::stoull(field_value(r.fields, "retx").value_or("0"));
    } else if (r.event == "http_request" && r.node == monitor && r.outcome == "served_from_cache") {
      ++counts.cache_served;
    }
  }
  const SimTime end = log.records().empty() ? SimTime{} : log.records().back().time;
  return aggregate_metrics(request_reports(log, monitor), counts, end);
}

namespace {

std::optional<nodes::RequestReport> find_request(const EventLog& log, std::uint64_t request_id) {
  for (const auto& r : log.records()) {
    if (r.event == "req_begin" && field_value(r.fields, "req") == std::to_string(request_id)) {
      for (auto& rep : request_reports(log, r.node))
        if (rep.request_id == request_id) return rep;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<Duration> measure_response_time(const EventLog& log, std::uint64_t request_id) {
  auto rep = find_request(log, request_id);
  if (!rep || rep->status != 200 || !rep->emitted || !rep->first_rx) return std::nullopt;
  return *rep->first_rx - *rep->emitted;
}

std::optional<Duration> measure_access_delay(const EventLog& log, std::uint64_t request_id) {
  auto rep = find_request(log, request_id);
  if (!rep || rep->status != 200 || !rep->emitted || !rep->completed) return std::nullopt;
  return *rep->completed - *rep->emitted;
}

// --- run ------------------------------------------------------------------------

namespace {

class ScenarioRun {
 public:
  explicit ScenarioRun(const ScenarioSpec& spec)
      : spec_(spec), net_(spec.effective_radio(), channel_for(spec), spec.network), params_(spec.arq_params()),
        server_(spec.server, params_) {
    net_.attach(server_);
    std::uint64_t page_seed = spec.seed;
    for (const auto& p : spec.pages) {
      for (std::uint32_t v = 1; v <= p.versions; ++v) {
        const Bytes body = p.body ? to_bytes(*p.body) : make_page_body(p.size, page_seed ^ v);
        server_.upload_page(p.name, body);
      }
      ++page_seed;
    }
    for (const auto& c : spec.clients) {
      nodes::ClientConfig cc;
      cc.id = c.id;
      cc.server = spec.server;
      cc.queue_limit = c.queue_limit;
      cc.cache_enabled = c.cache_enabled;
      cc.arq = params_;
      auto& client = clients_.emplace_back(std::make_unique<nodes::ClientNode>(cc, net_));
      auto& src = sources_.emplace_back(Source{c, radio::Rng::stream(spec.seed, radio::kScheduleStreamBase + c.id), 0});
      if (src.spec.pages.empty())
        for (const auto& p : spec.pages) src.spec.pages.push_back(p.name);
      if (c.id == spec.monitor) {
        client->set_observer([this](const nodes::RequestReport& r) {
          reports_.push_back(r);
          if (!r.is_ping && r.status == 200) ++successes_;
          if (spec_.target_successes && successes_ >= *spec_.target_successes) stop_ = true;
        });
      }
    }
  }

  RunResult run() {
    for (std::size_t i = 0; i < sources_.size(); ++i) schedule_next(i);
    const SimTime limit = SimTime(seconds_to_duration(spec_.max_duration_s));
    net_.run_until([this] { return stop_; }, limit);

    RunResult result;
    result.target_reached = stop_;
    ChannelCounts counts;
    counts.frames_sent = net_.stats().frames;
    counts.frames_delivered = net_.stats().delivered;
    counts.collisions = net_.stats().collisions;
    counts.retransmissions = server_.retransmissions();
    counts.cache_served = cache_served_;
    const SimTime end = net_.log().records().empty() ? SimTime{} : net_.log().records().back().time;
    result.metrics = aggregate_metrics(reports_, counts, end);
    result.requests = std::move(reports_);
    result.log = std::move(net_.log());
    return result;
  }

 private:
  struct Source {
    ClientSpec spec;
    radio::Rng rng;
    std::size_t next_index;
  };

  static radio::ChannelModel channel_for(const ScenarioSpec& spec) {
    radio::ChannelModel ch = spec.channel;
    ch.seed = spec.seed;
    return ch;
  }

  void schedule_next(std::size_t i) {
    auto& src = sources_[i];
    SimTime at;
    if (src.spec.schedule.explicit_times()) {
      if (src.next_index >= src.spec.schedule.at_s.size()) return;
      at = SimTime(seconds_to_duration(src.spec.schedule.at_s[src.next_index]));
      at = std::max(at, net_.now());
    } else {
      const double gap = src.rng.uniform(src.spec.schedule.min_gap_s, src.spec.schedule.max_gap_s);
      at = net_.now() + seconds_to_duration(gap);
    }
    ++src.next_index;
    net_.post(at, src.spec.id, [this, i](radio::Network&) { arrive(i); });
  }

  void arrive(std::size_t i) {
    auto& src = sources_[i];
    const auto& pages = src.spec.pages;
    const std::string& url = pages.size() == 1 ? pages.front() : pages[src.rng.index(pages.size())];
    const auto disposition = clients_[i]->submit_url(url, nullptr);
    if (disposition == nodes::Disposition::served_from_cache && src.spec.id == spec_.monitor) ++cache_served_;
    schedule_next(i);
  }

  const ScenarioSpec& spec_;
  radio::Network net_;
  transfer::ArqParams params_;
  nodes::ServerNode server_;
  std::vector<std::unique_ptr<nodes::ClientNode>> clients_;
  std::vector<Source> sources_;
  std::vector<nodes::RequestReport> reports_;
  std::size_t successes_ = 0;
  std::size_t cache_served_ = 0;
  bool stop_ = false;
};

}  // namespace

RunResult run_scenario(const ScenarioSpec& spec) {
  spec.validate();
  ScenarioRun run(spec);
  return run.run();
}

// --- experiments ----------------------------------------------------------------

PacketLossResult packet_loss_experiment(std::size_t transfers, std::uint64_t seed, double drop_probability,
                                        bool retransmit) {
  radio::RadioConfig radio;
  radio.spreading_factor = 7;
  radio.bandwidth_hz = 125000;
  radio::ChannelModel channel;
  channel.seed = seed;
  channel.random_drop_probability = drop_probability;
  channel.drop_control_frames = false;
  radio::Network net(radio, channel);
  transfer::ArqParams params = transfer::default_arq_params(radio, net.options());
  if (!retransmit) params.max_retry = 0;
  nodes::ServerNode server(0, params);
  net.attach(server);
  const std::string url = "packet.html";
  server.upload_page(url, make_page_body(200, seed));

  PacketLossResult out;
  for (std::size_t i = 0; i < transfers; ++i) {
    ++out.sent;
    if (cache::get_web_page(net, 1, 0, url, nullptr, params).ok) ++out.delivered;
  }
  out.pdr_pct = compute_pdr(out.delivered, out.sent);
  out.retransmissions = server.retransmissions();
  for (const auto& r : net.log().records())
    if (r.event == "tx_start" && r.frame.rfind("DATA ", 0) == 0) ++out.data_frames;
  return out;
}

std::vector<AccessDelayPoint> access_delay_experiment(const radio::RadioConfig& radio,
                                                      const std::vector<std::size_t>& sizes) {
  std::vector<AccessDelayPoint> out;
  for (std::size_t size : sizes) {
    radio::Network net(radio, radio::ChannelModel{});
    const transfer::ArqParams params = transfer::default_arq_params(radio, net.options());
    nodes::ServerNode server(0, params);
    net.attach(server);
    const Bytes body = make_page_body(size, size);
    server.upload_page("page.html", body);
    const auto res = cache::get_web_page(net, 1, 0, "page.html", nullptr, params);
    if (!res.ok) throw Error("lossless transfer of " + std::to_string(size) + " B failed");
    const auto reports = request_reports(net.log(), 1);
    const auto& rep = reports.back();
    out.push_back({size, framing::slice_payload(body).size(), to_ms(*rep.completed - *rep.emitted),
                   to_ms(*rep.first_rx - *rep.emitted)});
  }
  return out;
}

}  // namespace loraweb::sim
