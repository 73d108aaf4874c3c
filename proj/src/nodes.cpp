#include "loraweb/nodes.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>

namespace loraweb::nodes {

using framing::FrameKind;
using transfer::Frame;
using transfer::Frames;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool is_tchar(char c) {
  if (std::isalnum(static_cast<unsigned char>(c))) return true;
  return std::string_view("!#$%&'*+-.^_`|~").find(c) != std::string_view::npos;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string percent_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%') {
      if (i + 2 >= s.size() || hex_value(s[i + 1]) < 0 || hex_value(s[i + 2]) < 0)
        throw HttpParseError("bad percent-encoding in request target");
      out.push_back(static_cast<char>(hex_value(s[i + 1]) * 16 + hex_value(s[i + 2])));
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

}  // namespace

std::string page_name_from_target(std::string_view target) {
  if (target.empty()) throw HttpParseError("empty request target");
  if (const auto hash = target.find('#'); hash != std::string_view::npos) target = target.substr(0, hash);
  if (const auto q = target.find('?'); q != std::string_view::npos) target = target.substr(0, q);
  if (target.rfind("http://", 0) == 0 || target.rfind("https://", 0) == 0) {
    target.remove_prefix(target.find("//") + 2);
    const auto slash = target.find('/');
    target = slash == std::string_view::npos ? std::string_view("/") : target.substr(slash);
  }
  if (target.empty() || target.front() != '/')
    throw HttpParseError("request target must start with '/': " + std::string(target));
  std::string path = percent_decode(target.substr(1));
  return path.empty() ? "index.html" : path;
}

HttpRequestSummary parse_http_request(std::string_view raw) {
  auto line_end = raw.find('\n');
  std::string_view request_line = raw.substr(0, line_end);
  if (!request_line.empty() && request_line.back() == '\r') request_line.remove_suffix(1);

  const auto sp1 = request_line.find(' ');
  const auto sp2 = sp1 == std::string_view::npos ? sp1 : request_line.find(' ', sp1 + 1);
  if (sp1 == std::string_view::npos || sp2 == std::string_view::npos ||
      request_line.find(' ', sp2 + 1) != std::string_view::npos)
    throw HttpParseError("malformed request line: " + std::string(request_line));
  const std::string_view method = request_line.substr(0, sp1);
  const std::string_view target = request_line.substr(sp1 + 1, sp2 - sp1 - 1);
  const std::string_view version = request_line.substr(sp2 + 1);
  if (method.empty() || !std::all_of(method.begin(), method.end(), is_tchar))
    throw HttpParseError("malformed method: " + std::string(method));
  if (version.size() != 8 || version.substr(0, 5) != "HTTP/" || !std::isdigit(static_cast<unsigned char>(version[5])) ||
      version[6] != '.' || !std::isdigit(static_cast<unsigned char>(version[7])))
    throw HttpParseError("malformed HTTP version: " + std::string(version));

  HttpRequestSummary req;
  req.method = std::string(method);
  req.version = std::string(version);
  req.url = page_name_from_target(target);

  std::string_view rest = line_end == std::string_view::npos ? std::string_view() : raw.substr(line_end + 1);
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view() : rest.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) break;  // end of head
    const auto colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0) continue;  // tolerate junk header lines
    const std::string name = lower(line.substr(0, colon));
    const std::string value(trim(line.substr(colon + 1)));
    if (name == "host") req.host = value;
    else if (name == "connection") req.connection = value;
    else if (name == "user-agent") req.user_agent = value;
    else if (name == "accept") req.accept = value;
    else if (name == "accept-encoding") req.accept_encoding = value;
    else if (name == "accept-language") req.accept_language = value;
  }
  return req;
}

// --- ping ---------------------------------------------------------------------

PingResult StubPingBackend::ping(const std::string& host) {
  if (std::find(unreachable_.begin(), unreachable_.end(), host) != unreachable_.end()) return {host, std::nullopt, false};
  return {host, latency_, true};
}

PingResult TcpPingBackend::ping(const std::string& host) {
  PingResult result{host, std::nullopt, false};
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* addrs = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port_).c_str(), &hints, &addrs) != 0) return result;
  const auto start = std::chrono::steady_clock::now();
  for (addrinfo* a = addrs; a != nullptr && !result.reachable; a = a->ai_next) {
    const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL, 0) | O_NONBLOCK);
    int rc = ::connect(fd, a->ai_addr, a->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd pfd{fd, POLLOUT, 0};
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(timeout_).count();
      if (::poll(&pfd, 1, static_cast<int>(ms)) == 1) {
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
      }
    }
    if (rc == 0) {
      result.reachable = true;
      result.rtt = std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now() - start);
    }
    ::close(fd);
  }
  freeaddrinfo(addrs);
  return result;
}

Bytes encode_ping_reply(const PingResult& r) {
  const auto us = r.reachable && r.rtt ? std::chrono::duration_cast<std::chrono::microseconds>(*r.rtt).count() : 0;
  const auto v = static_cast<std::uint32_t>(std::clamp<long long>(us, 0, 0xffffffffLL));
  Bytes out{static_cast<std::uint8_t>(r.reachable ? 1 : 0)};
  const Bytes rtt = transfer::encode_version(v);
  out.insert(out.end(), rtt.begin(), rtt.end());
  return out;
}

PingResult decode_ping_reply(std::string target, std::span<const std::uint8_t> payload) {
  if (payload.size() != 5) throw DecodeError("ping reply must be 5 bytes");
  PingResult r{std::move(target), std::nullopt, payload[0] != 0};
  if (r.reachable) r.rtt = std::chrono::microseconds(*transfer::decode_version(payload.subspan(1)));
  return r;
}

// --- server -------------------------------------------------------------------

ServerNode::ServerNode(NodeId id, transfer::ArqParams params, std::shared_ptr<PingBackend> ping)
    : transfer::ServerStation(
          id, [this](const std::string& name) { return page(name); }, params),
      ping_(std::move(ping)) {}

UploadResult ServerNode::upload_page(const std::string& name, Bytes body) {
  cache::validate_page_name(name);
  UploadResult result;
  if (!framing::is_terminal(body)) {
    body.insert(body.end(), framing::kTerminalKeyword.begin(), framing::kTerminalKeyword.end());
    result.terminal_appended = true;
  }
  auto& page = pages_[name];
  page.name = name;
  page.version += 1;
  page.body = std::move(body);
  result.version = page.version;
  return result;
}

std::optional<transfer::WebPage> ServerNode::page(const std::string& name) const {
  auto it = pages_.find(name);
  if (it == pages_.end()) return std::nullopt;
  return it->second;
}

UploadResult upload_page(ServerNode& server, const std::string& name, Bytes body) {
  return server.upload_page(name, std::move(body));
}

void ServerNode::on_other_frame(const Frame& f, radio::Network& net) {
  if (f.kind != FrameKind::ping_request) return;
  const std::string host = to_string(f.payload);
  PingResult result = ping_ ? ping_->ping(host) : PingResult{host, std::nullopt, false};
  ++pings_;
  const SimTime reply_at = net.now() + (result.reachable && result.rtt ? *result.rtt : Duration::zero());
  Frame reply{id(), f.src, FrameKind::ping_reply, f.chunk_id, encode_ping_reply(result)};
  net.post(reply_at, id(), [this, reply](radio::Network& n) { emit({reply}, n); });
}

// --- client -------------------------------------------------------------------

namespace {

class PingExchange : public transfer::Exchange {
 public:
  PingExchange(NodeId self, NodeId server, std::string host, const transfer::ArqParams& params, Duration extra)
      : self_(self), server_(server), host_(std::move(host)), params_(params), extra_(extra) {}

  Frames begin(SimTime) override { return {request()}; }
  Frames on_frame(const Frame& f, SimTime now) override {
    if (done_ || f.kind != FrameKind::ping_reply || f.src != server_) return {};
    try {
      result_ = decode_ping_reply(host_, f.payload);
    } catch (const DecodeError&) {
      return {};
    }
    first_ = now;
    done_ = true;
    return {};
  }
  Frames on_timeout(SimTime) override {
    if (done_) return {};
    if (retries_ >= params_.max_retry) {
      done_ = true;
      result_ = PingResult{host_, std::nullopt, false};
      return {};
    }
    ++retries_;
    return {request()};
  }
  Duration timeout() const override { return done_ ? Duration::zero() : params_.receive_timeout + extra_; }
  bool listening() const override { return !done_; }
  bool completed() const override { return done_; }
  bool finished() const override { return done_; }
  std::optional<SimTime> first_response() const override { return first_; }
  std::string summary() const override {
    std::string s = "kind=ping host=" + host_ + (result_.reachable ? " outcome=success" : " outcome=failure");
    if (result_.rtt) s += " rtt_us=" + std::to_string(std::chrono::duration_cast<std::chrono::microseconds>(*result_.rtt).count());
    return s;
  }
  const PingResult& result() const { return result_; }

 private:
  Frame request() const {
    return Frame{self_, server_, FrameKind::ping_request, static_cast<std::uint16_t>(retries_), to_bytes(host_)};
  }
  NodeId self_, server_;
  std::string host_;
  transfer::ArqParams params_;
  Duration extra_;
  int retries_ = 0;
  bool done_ = false;
  std::optional<SimTime> first_;
  PingResult result_;
};

}  // namespace

std::string_view disposition_name(Disposition d) {
  switch (d) {
    case Disposition::served_from_cache: return "served_from_cache";
    case Disposition::queued: return "queued";
    case Disposition::coalesced: return "coalesced";
    case Disposition::rejected: return "rejected";
  }
  return "?";
}

ClientNode::ClientNode(ClientConfig config, radio::Network& net, std::shared_ptr<cache::Storage> storage)
    : config_(std::move(config)), net_(net), station_(config_.id) {
  config_.arq.validate();
  if (config_.queue_limit == 0) throw ConfigError("client queue_limit must be positive");
  if (config_.cache_enabled)
    store_ = std::make_unique<cache::CacheStore>(storage ? std::move(storage) : std::make_shared<cache::MemoryStorage>());
  net_.attach(station_);
}

ClientNode::~ClientNode() { net_.detach(config_.id); }

std::optional<std::string> ClientNode::in_flight() const {
  if (active_ && !active_->is_ping) return active_->key;
  return std::nullopt;
}

Disposition ClientNode::submit(const HttpRequestSummary& request, Responder respond) {
  if (request.method != "GET") {
    ++rejected_;
    if (respond) respond(ClientResponse{405, request.url, to_bytes("method not allowed"), cache::Source::fetched, 0});
    return Disposition::rejected;
  }
  return submit_url(request.url, std::move(respond));
}

Disposition ClientNode::submit_url(const std::string& url, Responder respond) {
  try {
    cache::validate_page_name(url);
  } catch (const ValidationError& e) {
    ++rejected_;
    if (respond) respond(ClientResponse{400, url, to_bytes(e.what()), cache::Source::fetched, 0});
    return Disposition::rejected;
  }
  if (store_ && config_.cache_freshness > Duration::zero()) {
    auto it = fetched_at_.find(url);
    if (it != fetched_at_.end() && net_.now() - it->second < config_.cache_freshness && store_->lookup(url)) {
      try {
        ClientResponse r{200, url, store_->get(url), cache::Source::cache_hit, 0};
        net_.log().append(net_.now(), config_.id, "http_request", "-", "served_from_cache", "url=" + url);
        if (respond) respond(r);
        return Disposition::served_from_cache;
      } catch (const Error&) {
        store_->evict(url);
      }
    }
  }
  Item item;
  item.key = url;
  if (respond) item.waiters.push_back(std::move(respond));
  return enqueue(std::move(item));
}

Disposition ClientNode::ping(const std::string& host, PingResponder respond) {
  if (host.empty() || host.size() > framing::kMaxPayload) throw ValidationError("bad ping host");
  Item item;
  item.is_ping = true;
  item.key = host;
  if (respond) item.ping_waiters.push_back(std::move(respond));
  return enqueue(std::move(item));
}

ClientNode::Item* ClientNode::find(const std::string& key, bool is_ping) {
  if (active_ && active_->key == key && active_->is_ping == is_ping) return &*active_;
  for (auto& it : queue_)
    if (it.key == key && it.is_ping == is_ping) return &it;
  return nullptr;
}

Disposition ClientNode::enqueue(Item item) {
  const std::string what = std::string(item.is_ping ? "host=" : "url=") + item.key;
  if (Item* existing = find(item.key, item.is_ping)) {
    for (auto& w : item.waiters) existing->waiters.push_back(std::move(w));
    for (auto& w : item.ping_waiters) existing->ping_waiters.push_back(std::move(w));
    ++coalesced_;
    net_.log().append(net_.now(), config_.id, "http_request", "-", "coalesced", what);
    return Disposition::coalesced;
  }
  if (queue_.size() >= config_.queue_limit) {
    ++rejected_;
    net_.log().append(net_.now(), config_.id, "http_request", "-", "rejected", what);
    for (auto& w : item.waiters) w(ClientResponse{503, item.key, to_bytes("client queue full"), cache::Source::fetched, 0});
    for (auto& w : item.ping_waiters) w(PingResult{item.key, std::nullopt, false});
    return Disposition::rejected;
  }
  queue_.push_back(std::move(item));
  net_.log().append(net_.now(), config_.id, "http_request", "-", "queued", what);
  start_next();
  return Disposition::queued;
}

void ClientNode::start_next() {
  if (station_.busy() || active_ || queue_.empty()) return;
  active_ = std::move(queue_.front());
  queue_.pop_front();
  ++started_;
  active_request_ = net_.next_request_id();
  report_ = RequestReport{};
  report_.request_id = active_request_;
  report_.client = config_.id;
  report_.is_ping = active_->is_ping;
  report_.key = active_->key;
  report_.begin = net_.now();
  std::unique_ptr<transfer::Exchange> ex;
  if (active_->is_ping)
    ex = std::make_unique<PingExchange>(config_.id, config_.server, active_->key, config_.arq, config_.ping_timeout);
  else
    ex = std::make_unique<cache::PageFetch>(config_.id, config_.server, active_->key, config_.arq, store_.get());
  station_.start(
      std::move(ex), net_, active_request_, [this](transfer::Exchange& e, radio::Network&) { finish(e); },
      [this](transfer::Exchange& e, radio::Network&) { release(e); });
}

void ClientNode::release(transfer::Exchange& ex) {
  report_.emitted = station_.emitted_at();
  report_.first_rx = ex.first_response();
  report_.released = net_.now();
  if (observer_) observer_(report_);
  net_.post(net_.now(), config_.id, [this](radio::Network&) { start_next(); });
}

void ClientNode::finish(transfer::Exchange& ex) {
  if (!active_) return;
  Item item = std::move(*active_);
  active_.reset();
  report_.completed = net_.now();
  if (item.is_ping) {
    const PingResult result = static_cast<PingExchange&>(ex).result();
    report_.status = result.reachable ? 200 : 504;
    for (auto& w : item.ping_waiters) w(result);
    return;
  }
  const auto& res = static_cast<cache::PageFetch&>(ex).result();
  ClientResponse r;
  r.url = item.key;
  r.request_id = active_request_;
  r.source = res.source;
  if (res.ok) {
    r.status = 200;
    r.body = res.body;
    fetched_at_[item.key] = net_.now();
  } else if (res.not_found) {
    r.status = 404;
    r.body = res.body;
  } else {
    r.status = 504;
    r.body = to_bytes("page transfer over the LoRa link failed");
  }
  report_.status = r.status;
  report_.source = r.source;
  report_.bytes = r.status == 200 ? r.body.size() : 0;
  for (auto& w : item.waiters) w(r);
}

}  // namespace loraweb::nodes
