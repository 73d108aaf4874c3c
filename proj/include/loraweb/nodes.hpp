#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>

#include "loraweb/cache.hpp"
#include "loraweb/transfer.hpp"

namespace loraweb::nodes {

class HttpParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
  int status() const { return 400; }
};

struct HttpRequestSummary {
  std::string method;
  std::string url;  // page name: no leading '/', query or fragment
  std::string host;
  std::string connection;
  std::string user_agent;
  std::string accept;
  std::string accept_encoding;
  std::string accept_language;
  std::string version;  // e.g. "HTTP/1.1"
};

// Parses a raw HTTP/1.x request head. Throws HttpParseError when the request
// line is malformed.
HttpRequestSummary parse_http_request(std::string_view raw);
// Maps a request target ("/a.html?x=1", "http://host/", ...) to a page name.
std::string page_name_from_target(std::string_view target);

struct PingResult {
  std::string target;
  std::optional<Duration> rtt;  // present iff reachable
  bool reachable = false;
};

class PingBackend {
 public:
  virtual ~PingBackend() = default;
  virtual PingResult ping(const std::string& host) = 0;
};

// Deterministic backend: every host answers after `latency`, except those
// listed as unreachable.
class StubPingBackend : public PingBackend {
 public:
  explicit StubPingBackend(Duration latency) : latency_(latency) {}
  void set_unreachable(std::string host) { unreachable_.push_back(std::move(host)); }
  PingResult ping(const std::string& host) override;
  Duration latency() const { return latency_; }

 private:
  Duration latency_;
  std::vector<std::string> unreachable_;
};

// Measures the time to open a TCP connection to host:port.
class TcpPingBackend : public PingBackend {
 public:
  explicit TcpPingBackend(int port = 80, Duration timeout = std::chrono::seconds(2))
      : port_(port), timeout_(timeout) {}
  PingResult ping(const std::string& host) override;

 private:
  int port_;
  Duration timeout_;
};

Bytes encode_ping_reply(const PingResult& result);
PingResult decode_ping_reply(std::string target, std::span<const std::uint8_t> payload);

// ---------------------------------------------------------------------------

struct UploadResult {
  std::uint32_t version = 0;
  bool terminal_appended = false;
};

class ServerNode : public transfer::ServerStation {
 public:
  ServerNode(NodeId id, transfer::ArqParams params, std::shared_ptr<PingBackend> ping = nullptr);

  // Stores a new version of the page; bodies lacking the terminal keyword
  // get it appended.
  UploadResult upload_page(const std::string& name, Bytes body);
  std::optional<transfer::WebPage> page(const std::string& name) const;
  std::size_t page_count() const { return pages_.size(); }
  std::uint64_t pings_answered() const { return pings_; }

 protected:
  void on_other_frame(const transfer::Frame& frame, radio::Network& net) override;

 private:
  std::unordered_map<std::string, transfer::WebPage> pages_;
  std::shared_ptr<PingBackend> ping_;
  std::uint64_t pings_ = 0;
};

UploadResult upload_page(ServerNode& server, const std::string& name, Bytes body);

// ---------------------------------------------------------------------------

struct ClientConfig {
  NodeId id = 1;
  NodeId server = 0;
  std::size_t queue_limit = 32;
  bool cache_enabled = true;
  // Cached pages younger than this are served without a version check.
  Duration cache_freshness = Duration::zero();
  // Extra wait on top of the receive timeout for a ping reply.
  Duration ping_timeout = std::chrono::seconds(2);
  transfer::ArqParams arq;
};

enum class Disposition { served_from_cache, queued, coalesced, rejected };
std::string_view disposition_name(Disposition d);

struct ClientResponse {
  int status = 500;  // 200, 404, 400, 405, 503 or 504
  std::string url;
  Bytes body;
  cache::Source source = cache::Source::fetched;
  std::uint64_t request_id = 0;
};

using Responder = std::function<void(const ClientResponse&)>;

// One radio exchange as seen by the client, reported when its station frees.
struct RequestReport {
  std::uint64_t request_id = 0;
  NodeId client = 0;
  bool is_ping = false;
  std::string key;  // url or ping host
  SimTime begin{};
  std::optional<SimTime> emitted;
  std::optional<SimTime> first_rx;
  std::optional<SimTime> completed;
  SimTime released{};
  int status = 504;  // 200, 404 or 504 for pages; 200/504 for pings
  cache::Source source = cache::Source::fetched;
  std::size_t bytes = 0;
};
using RequestObserver = std::function<void(const RequestReport&)>;
using PingResponder = std::function<void(const PingResult&)>;

// A LoRaWeb client: takes page requests, coalesces identical ones, and runs
// one radio exchange at a time in FIFO order.
class ClientNode {
 public:
  ClientNode(ClientConfig config, radio::Network& net, std::shared_ptr<cache::Storage> storage = nullptr);
  ~ClientNode();
  ClientNode(const ClientNode&) = delete;
  ClientNode& operator=(const ClientNode&) = delete;

  Disposition submit(const HttpRequestSummary& request, Responder respond);
  Disposition submit_url(const std::string& url, Responder respond);
  Disposition ping(const std::string& host, PingResponder respond);

  NodeId id() const { return config_.id; }
  bool busy() const { return station_.busy(); }
  std::size_t queue_size() const { return queue_.size(); }
  std::optional<std::string> in_flight() const;
  cache::CacheStore* cache() { return store_.get(); }
  const ClientConfig& config() const { return config_; }
  void set_observer(RequestObserver observer) { observer_ = std::move(observer); }

  std::uint64_t exchanges_started() const { return started_; }
  std::uint64_t coalesced() const { return coalesced_; }
  std::uint64_t rejected() const { return rejected_; }

 private:
  struct Item {
    bool is_ping = false;
    std::string key;  // page name, or host for pings
    std::vector<Responder> waiters;
    std::vector<PingResponder> ping_waiters;
  };
  Disposition enqueue(Item item);
  Item* find(const std::string& key, bool is_ping);
  void start_next();
  void finish(transfer::Exchange& ex);
  void release(transfer::Exchange& ex);

  ClientConfig config_;
  radio::Network& net_;
  transfer::ExchangeStation station_;
  std::unique_ptr<cache::CacheStore> store_;
  std::deque<Item> queue_;
  std::optional<Item> active_;
  std::uint64_t active_request_ = 0;
  RequestReport report_;
  RequestObserver observer_;
  std::unordered_map<std::string, SimTime> fetched_at_;
  std::uint64_t started_ = 0;
  std::uint64_t coalesced_ = 0;
  std::uint64_t rejected_ = 0;
};

}  // namespace loraweb::nodes
