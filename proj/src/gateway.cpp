#include "loraweb/gateway.hpp"

#include <httplib.h>

#include <json.hpp>

namespace loraweb::gateway {

using nlohmann::json;

void GatewayConfig::validate() const {
  if (port < 0 || port > 65535) throw ConfigError("port out of range: " + std::to_string(port));
  if (admin_prefix.empty() || admin_prefix.front() != '/' || admin_prefix.back() == '/')
    throw ConfigError("admin prefix must start with '/' and not end with one: " + admin_prefix);
  if (!(time_scale >= 0.0)) throw ConfigError("time_scale must be >= 0");
}

struct Gateway::Core {
  sim::ScenarioSpec scenario;
  radio::Network net;
  nodes::ServerNode server;
  std::unique_ptr<nodes::ClientNode> client;
  std::chrono::steady_clock::time_point wall0 = std::chrono::steady_clock::now();
  double time_scale;

  static radio::ChannelModel channel_for(const sim::ScenarioSpec& s) {
    radio::ChannelModel ch = s.channel;
    ch.seed = s.seed;
    return ch;
  }

  Core(sim::ScenarioSpec spec, NodeId client_id, std::shared_ptr<nodes::PingBackend> ping, double scale)
      : scenario(std::move(spec)), net(scenario.effective_radio(), channel_for(scenario), scenario.network),
        server(scenario.server, scenario.arq_params(), std::move(ping)), time_scale(scale) {
    net.attach(server);
    std::uint64_t page_seed = scenario.seed;
    for (const auto& p : scenario.pages) {
      for (std::uint32_t v = 1; v <= p.versions; ++v)
        server.upload_page(p.name, p.body ? to_bytes(*p.body) : sim::make_page_body(p.size, page_seed ^ v));
      ++page_seed;
    }
    nodes::ClientConfig cc;
    cc.id = client_id;
    cc.server = scenario.server;
    cc.arq = scenario.arq_params();
    for (const auto& c : scenario.clients) {
      if (c.id != client_id) continue;
      cc.cache_enabled = c.cache_enabled;
      cc.queue_limit = c.queue_limit;
    }
    client = std::make_unique<nodes::ClientNode>(cc, net);
  }

  // Simulated time that corresponds to the current wall-clock instant.
  SimTime sim_now_from_wall() const {
    const auto wall = std::chrono::steady_clock::now() - wall0;
    return SimTime(Duration(static_cast<Duration::rep>(static_cast<double>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(wall).count()) * time_scale)));
  }
  std::chrono::steady_clock::time_point wall_of(SimTime t) const {
    return wall0 + std::chrono::nanoseconds(static_cast<std::int64_t>(static_cast<double>(t.count()) / time_scale));
  }
  void sync_clock() {
    if (time_scale <= 0.0) return;
    const SimTime target = sim_now_from_wall();
    if (target > net.now()) net.run_until(target);
  }
};

Gateway::Gateway(GatewayConfig config, sim::ScenarioSpec scenario, std::shared_ptr<nodes::PingBackend> ping)
    : config_(std::move(config)) {
  config_.validate();
  scenario.validate();
  const NodeId client = config_.client.value_or(scenario.monitor);
  if (client == scenario.server) throw ConfigError("gateway client id equals the server id");
  core_ = std::make_unique<Core>(std::move(scenario), client, std::move(ping), config_.time_scale);
  http_ = std::make_unique<httplib::Server>();
  install_routes();
}

Gateway::~Gateway() { stop(); }

void Gateway::post(std::function<void()> command) {
  {
    std::lock_guard lk(mu_);
    if (stopping_) return;  // dropping the command breaks its promise and wakes the caller
    commands_.push_back(std::move(command));
  }
  cv_.notify_all();
}

void Gateway::start() {
  if (started_) return;
  if (config_.port == 0) {
    bound_port_ = http_->bind_to_any_port(config_.host);
    if (bound_port_ <= 0) throw Error("cannot bind " + config_.host + " to a free port");
  } else {
    if (!http_->bind_to_port(config_.host, config_.port))
      throw Error("cannot bind " + config_.host + ":" + std::to_string(config_.port));
    bound_port_ = config_.port;
  }
  started_ = true;
  core_->wall0 = std::chrono::steady_clock::now();
  core_thread_ = std::thread([this] { core_loop(); });
  http_thread_ = std::thread([this] { http_->listen_after_bind(); });
}

void Gateway::stop() {
  {
    std::lock_guard lk(mu_);
    if (stopping_) return;
    stopping_ = true;
  }
  cv_.notify_all();
  if (core_thread_.joinable()) core_thread_.join();
  {
    // Unanswered HTTP requests hold promises inside the queued commands and
    // the client's waiter lists; releasing them wakes their handlers.
    std::lock_guard lk(mu_);
    commands_.clear();
  }
  core_->client.reset();
  if (http_) http_->stop();
  if (http_thread_.joinable()) http_thread_.join();
}

void Gateway::wait() {
  std::unique_lock lk(mu_);
  cv_.wait(lk, [&] { return stopping_; });
}

void Gateway::core_loop() {
  std::unique_lock lk(mu_);
  auto wake = [&] { return stopping_ || !commands_.empty(); };
  while (!stopping_) {
    if (!commands_.empty()) {
      if (config_.batch_window.count() > 0) cv_.wait_for(lk, config_.batch_window, [&] { return stopping_; });
      auto batch = std::move(commands_);
      commands_.clear();
      lk.unlock();
      core_->sync_clock();
      for (auto& cmd : batch) cmd();
      lk.lock();
      continue;
    }
    if (config_.time_scale <= 0.0) {
      if (core_->net.pending_events() > 0) {
        lk.unlock();
        core_->net.step();
        lk.lock();
      } else {
        cv_.wait(lk, wake);
      }
      continue;
    }
    lk.unlock();
    core_->sync_clock();
    const auto next = core_->net.next_event_time();
    lk.lock();
    if (next)
      cv_.wait_until(lk, core_->wall_of(*next), wake);
    else
      cv_.wait(lk, wake);
  }
}

namespace {

std::string raw_head(const httplib::Request& req) {
  std::string raw = req.method + " " + req.target + " " + req.version + "\r\n";
  for (const auto& [k, v] : req.headers) raw += k + ": " + v + "\r\n";
  return raw + "\r\n";
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

void Gateway::install_routes() {
  const std::string admin = config_.admin_prefix;

  http_->Get(admin + "/log", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(call([this] { return core_->net.log().to_text(); }), "text/tab-separated-values");
  });

  http_->Get(admin + "/stats", [this](const httplib::Request&, httplib::Response& res) {
    const json body = call([this] {
      const auto m = sim::metrics_from_log(core_->net.log(), core_->client->id());
      const auto& st = core_->net.stats();
      return json{
          {"client",
           {{"id", core_->client->id()},
            {"requests_sent", m.requests_sent},
            {"requests_ok", m.requests_ok},
            {"pdr_pct", m.pdr_pct},
            {"mean_access_ms", m.mean_access_ms},
            {"mean_response_ms", m.mean_response_ms},
            {"cache_hits", m.cache_hits},
            {"coalesced", core_->client->coalesced()},
            {"rejected", core_->client->rejected()},
            {"queue", core_->client->queue_size()}}},
          {"channel",
           {{"frames", st.frames}, {"delivered", st.delivered}, {"collisions", st.collisions}, {"fades", st.fades}}},
          {"server",
           {{"id", core_->server.id()},
            {"pages", core_->server.page_count()},
            {"transfers_started", core_->server.transfers_started()},
            {"transfers_succeeded", core_->server.transfers_succeeded()},
            {"transfers_failed", core_->server.transfers_failed()},
            {"retransmissions", core_->server.retransmissions()}}},
          {"sim_time_s", static_cast<double>(core_->net.now().count()) / 1e9}};
    });
    send_json(res, 200, body);
  });

  http_->Get(admin + "/ping", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string host = req.get_param_value("host");
    if (host.empty() || host.size() > framing::kMaxPayload) {
      send_json(res, 400, {{"error", "query parameter 'host' is required"}});
      return;
    }
    auto done = std::make_shared<std::promise<nodes::PingResult>>();
    auto fut = done->get_future();
    post([this, host, done] {
      core_->client->ping(host, [done](const nodes::PingResult& r) { done->set_value(r); });
    });
    try {
      if (fut.wait_for(config_.request_timeout) != std::future_status::ready) {
        send_json(res, 504, {{"host", host}, {"error", "ping timed out"}});
        return;
      }
      const auto r = fut.get();
      json body{{"host", host}, {"reachable", r.reachable}};
      if (r.rtt) body["rtt_ms"] = static_cast<double>(std::chrono::duration_cast<std::chrono::microseconds>(*r.rtt).count()) / 1e3;
      send_json(res, r.reachable ? 200 : 504, body);
    } catch (const std::future_error&) {
      send_json(res, 503, {{"error", "gateway shutting down"}});
    }
  });

  http_->Post(admin + R"(/pages/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string name = req.matches[1];
    try {
      const auto up = call([&] { return core_->server.upload_page(name, to_bytes(req.body)); });
      send_json(res, 200, {{"name", name}, {"version", up.version}, {"terminal_appended", up.terminal_appended}});
    } catch (const ValidationError& e) {
      send_json(res, 400, {{"error", e.what()}});
    }
  });

  auto page = [this](const httplib::Request& req, httplib::Response& res) {
    nodes::HttpRequestSummary summary;
    try {
      summary = nodes::parse_http_request(raw_head(req));
    } catch (const nodes::HttpParseError& e) {
      res.status = 400;
      res.set_content(std::string(e.what()) + "\n", "text/plain");
      return;
    }
    auto done = std::make_shared<std::promise<nodes::ClientResponse>>();
    auto fut = done->get_future();
    post([this, summary, done] {
      core_->client->submit(summary, [done](const nodes::ClientResponse& r) { done->set_value(r); });
    });
    try {
      if (fut.wait_for(config_.request_timeout) != std::future_status::ready) {
        res.status = 504;
        res.set_content("page request timed out\n", "text/plain");
        return;
      }
      const auto r = fut.get();
      res.status = r.status;
      res.set_header("X-LoRaWeb-Source", std::string(cache::source_name(r.source)));
      res.set_header("X-LoRaWeb-Cache", r.source == cache::Source::cache_hit ? "hit" : "miss");
      if (r.request_id != 0) res.set_header("X-LoRaWeb-Request", std::to_string(r.request_id));
      const bool html = r.status == 200 || r.status == 404;
      res.set_content(std::string(r.body.begin(), r.body.end()), html ? "text/html" : "text/plain");
    } catch (const std::future_error&) {
      res.status = 503;
      res.set_content("gateway shutting down\n", "text/plain");
    }
  };
  http_->Get(R"(/(.*))", page);
  http_->Post(R"(/(.*))", page);
  http_->Put(R"(/(.*))", page);
  http_->Delete(R"(/(.*))", page);
}

}  // namespace loraweb::gateway
