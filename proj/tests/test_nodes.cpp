#include <chrono>

#include "doctest.h"
#include "helpers.hpp"
#include "loraweb/nodes.hpp"

using namespace loraweb;
using namespace loraweb::nodes;
using namespace std::chrono_literals;

namespace {

struct Rig {
  radio::RadioConfig cfg = testutil::radio_config(7, 500000);
  radio::Network net{cfg, radio::ChannelModel{}};
  transfer::ArqParams params = transfer::default_arq_params(cfg);
  std::shared_ptr<StubPingBackend> pinger = std::make_shared<StubPingBackend>(87ms);
  ServerNode server{0, params, pinger};
  ClientNode client;

  explicit Rig(ClientConfig cc = {}) : client((cc.arq = params, cc), net) { net.attach(server); }

  void drain() {
    net.run_until([&] { return !client.busy() && client.queue_size() == 0 && net.radio_idle() && !server.transferring(); },
                  net.now() + 3600s);
  }
};

std::string body_text(const Bytes& b) { return std::string(b.begin(), b.end()); }

}  // namespace

TEST_CASE("HTTP request parsing") {
  auto r = parse_http_request("GET /bulletin.html HTTP/1.1\r\nHost: lora.local\r\n\r\n");
  CHECK(r.method == "GET");
  CHECK(r.url == "bulletin.html");
  CHECK(r.host == "lora.local");
  CHECK(r.version == "HTTP/1.1");

  CHECK(parse_http_request("GET / HTTP/1.1\r\n\r\n").url == "index.html");
  CHECK(parse_http_request("GET /a%20b.html?x=1#top HTTP/1.0\n").url == "a b.html");
  CHECK(parse_http_request("GET http://lora.local/news.html HTTP/1.1\r\n\r\n").url == "news.html");
  auto h = parse_http_request("GET /x HTTP/1.1\nUSER-AGENT: w3m\nAccept-Language:  en \n\n");
  CHECK(h.user_agent == "w3m");
  CHECK(h.accept_language == "en");

  CHECK_THROWS_AS(parse_http_request("FOO bar"), HttpParseError);
  CHECK_THROWS_AS(parse_http_request("GET /x HTTP/1.1 extra\r\n"), HttpParseError);
  CHECK_THROWS_AS(parse_http_request("GET x.html HTTP/1.1\r\n"), HttpParseError);
  CHECK_THROWS_AS(parse_http_request("GET /%zz HTTP/1.1\r\n"), HttpParseError);
  CHECK(HttpParseError("x").status() == 400);
}

TEST_CASE("upload versions pages and appends the terminal keyword") {
  Rig rig;
  auto first = rig.server.upload_page("news.html", to_bytes("<html>hello"));
  CHECK(first.version == 1);
  CHECK(first.terminal_appended);
  CHECK(body_text(rig.server.page("news.html")->body) == "<html>hello</html>");
  auto second = upload_page(rig.server, "news.html", to_bytes("<html>v2</html>\n"));
  CHECK(second.version == 2);
  CHECK_FALSE(second.terminal_appended);
  CHECK(rig.server.page_count() == 1);
  CHECK_THROWS_AS(rig.server.upload_page("../etc", to_bytes("x")), ValidationError);
}

TEST_CASE("a client serves a page and reports status codes") {
  Rig rig;
  rig.server.upload_page("a.html", testutil::html_page(1200));
  std::vector<ClientResponse> got;
  auto collect = [&](const ClientResponse& r) { got.push_back(r); };
  CHECK(rig.client.submit(parse_http_request("GET /a.html HTTP/1.1\r\n\r\n"), collect) == Disposition::queued);
  CHECK(rig.client.submit_url("missing.html", collect) == Disposition::queued);
  CHECK(rig.client.submit(parse_http_request("POST /a.html HTTP/1.1\r\n\r\n"), collect) == Disposition::rejected);
  CHECK(rig.client.submit_url(".hidden", collect) == Disposition::rejected);
  rig.drain();
  REQUIRE(got.size() == 4);
  CHECK(got[0].status == 405);
  CHECK(got[1].status == 400);
  CHECK(got[2].status == 200);
  CHECK(got[2].body == rig.server.page("a.html")->body);
  CHECK(got[3].status == 404);
  CHECK(body_text(got[3].body) == transfer::kNotFoundBody);
}

TEST_CASE("identical requests are coalesced into one exchange") {
  for (int n : {1, 2, 5, 20}) {
    Rig rig;
    rig.server.upload_page("p.html", testutil::html_page(800));
    int done = 0;
    for (int i = 0; i < n; ++i)
      rig.client.submit_url("p.html", [&](const ClientResponse& r) {
        CHECK(r.status == 200);
        ++done;
      });
    rig.drain();
    CHECK(done == n);
    CHECK(rig.client.exchanges_started() == 1);
    CHECK(rig.client.coalesced() == static_cast<std::uint64_t>(n - 1));
    CHECK(testutil::count_frames(rig.net.log(), "REQUEST") == 1);
  }
}

TEST_CASE("distinct requests run one at a time in FIFO order") {
  Rig rig;
  for (auto name : {"a.html", "b.html", "c.html"}) rig.server.upload_page(name, testutil::html_page(600));
  std::vector<std::string> order;
  for (auto name : {"c.html", "a.html", "b.html"})
    rig.client.submit_url(name, [&](const ClientResponse& r) { order.push_back(r.url); });
  CHECK(rig.client.in_flight() == "c.html");
  CHECK(rig.client.queue_size() == 2);
  rig.drain();
  CHECK(order == std::vector<std::string>{"c.html", "a.html", "b.html"});

  // Request records never overlap in time.
  SimTime last_done{};
  for (const auto& r : rig.net.log().records()) {
    if (r.event == "req_begin") CHECK(r.time >= last_done);
    if (r.event == "req_done") last_done = r.time;
  }
}

TEST_CASE("queue overflow answers 503") {
  ClientConfig cc;
  cc.queue_limit = 2;
  Rig rig(cc);
  rig.server.upload_page("a.html", testutil::html_page(300));
  std::vector<int> statuses;
  auto collect = [&](const ClientResponse& r) { statuses.push_back(r.status); };
  CHECK(rig.client.submit_url("a.html", collect) == Disposition::queued);  // goes active at once
  CHECK(rig.client.submit_url("b.html", collect) == Disposition::queued);
  CHECK(rig.client.submit_url("c.html", collect) == Disposition::queued);
  CHECK(rig.client.submit_url("d.html", collect) == Disposition::rejected);
  CHECK(statuses == std::vector<int>{503});
  CHECK(rig.client.submit_url("b.html", collect) == Disposition::coalesced);
  rig.drain();
  CHECK(statuses.size() == 5);
  CHECK(rig.client.rejected() == 1);
}

TEST_CASE("the client validates its cache with a version query") {
  Rig rig;
  rig.server.upload_page("v.html", to_bytes("<html>1</html>"));
  for (int i = 0; i < 3; ++i) rig.server.upload_page("v.html", to_bytes("<html>" + std::to_string(i + 2) + "</html>"));
  REQUIRE(rig.server.page("v.html")->version == 4);

  ClientResponse last;
  rig.client.submit_url("v.html", [&](const ClientResponse& r) { last = r; });
  rig.drain();
  CHECK(last.source == cache::Source::fetched);
  CHECK(rig.client.cache()->lookup("v.html") == 4u);

  const auto mark = testutil::count_frames(rig.net.log(), "DATA");
  rig.client.submit_url("v.html", [&](const ClientResponse& r) { last = r; });
  rig.drain();
  CHECK(last.status == 200);
  CHECK(last.source == cache::Source::cache_hit);
  CHECK(body_text(last.body) == "<html>4</html>");
  CHECK(testutil::count_frames(rig.net.log(), "DATA") == mark);
  CHECK(testutil::count_frames(rig.net.log(), "VERSION_QUERY") == 1);
}

TEST_CASE("fresh cache entries skip the radio") {
  ClientConfig cc;
  cc.cache_freshness = 60s;
  Rig rig(cc);
  rig.server.upload_page("f.html", testutil::html_page(500));
  rig.client.submit_url("f.html", nullptr);
  rig.drain();
  const auto frames = rig.net.stats().frames;
  ClientResponse last;
  CHECK(rig.client.submit_url("f.html", [&](const ClientResponse& r) { last = r; }) == Disposition::served_from_cache);
  CHECK(last.source == cache::Source::cache_hit);
  CHECK(rig.net.stats().frames == frames);
}

TEST_CASE("ping runs over the radio through the server backend") {
  Rig rig;
  std::optional<PingResult> result;
  rig.client.ping("example.org", [&](const PingResult& r) { result = r; });
  rig.drain();
  REQUIRE(result);
  CHECK(result->reachable);
  CHECK(result->rtt == 87ms);
  CHECK(rig.server.pings_answered() == 1);

  rig.pinger->set_unreachable("dead.example");
  result.reset();
  rig.client.ping("dead.example", [&](const PingResult& r) { result = r; });
  rig.drain();
  REQUIRE(result);
  CHECK_FALSE(result->reachable);
  CHECK_FALSE(result->rtt);
}

TEST_CASE("ping reply encoding") {
  PingResult r{"h", 87ms, true};
  auto bytes = encode_ping_reply(r);
  CHECK(bytes == Bytes{1, 0x00, 0x01, 0x53, 0xd8});  // 87000 us
  auto back = decode_ping_reply("h", bytes);
  CHECK(back.reachable);
  CHECK(back.rtt == 87ms);
  CHECK_THROWS_AS(decode_ping_reply("h", Bytes{1, 2}), DecodeError);
}
