#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "loraweb/transfer.hpp"

using namespace loraweb;
using namespace loraweb::transfer;
using namespace std::chrono_literals;
using framing::FrameKind;

namespace {

ArqParams params_for(const radio::RadioConfig& cfg, int max_retry = 5) {
  ArqParams p = default_arq_params(cfg);
  p.max_retry = max_retry;
  return p;
}

Frame data(std::uint16_t id, std::string_view payload, NodeId src = 0, NodeId dst = 1) {
  return Frame{src, dst, FrameKind::data, id, to_bytes(payload)};
}

struct Rig {
  radio::RadioConfig cfg;
  radio::Network net;
  explicit Rig(radio::ChannelModel channel = {}, radio::RadioConfig c = testutil::radio_config(7, 500000))
      : cfg(c), net(c, channel) {}
};

}  // namespace

TEST_CASE("receiver accepts the terminal chunk and finishes") {
  const auto p = params_for(testutil::radio_config(7, 125000));
  Receiver r(1, 0, "index.html", p);
  auto out = r.begin(0s);
  REQUIRE(out.size() == 1);
  CHECK(out[0].kind == FrameKind::request);
  CHECK(to_string(out[0].payload) == "index.html");
  out = r.on_frame(data(1, "<p>x</p></html>"), 1s);
  REQUIRE(out.size() == 1);
  CHECK(out[0] == make_ack(1, 0, 1));
  CHECK(r.phase() == ReceiverPhase::done);
  CHECK(to_string(r.body()) == "<p>x</p></html>");
  CHECK(r.first_packet_time() == 1s);
  CHECK(r.completion_time() == 1s);
}

TEST_CASE("receiver re-acks duplicates without storing them") {
  const auto p = params_for(testutil::radio_config(7, 125000));
  Receiver r(1, 0, "a", p);
  r.begin(0s);
  for (std::uint16_t i = 1; i <= 3; ++i) r.on_frame(data(i, std::string(250, 'a')), 0s);
  REQUIRE(r.last_acked() == 3);
  const auto out = r.on_frame(data(3, std::string(250, 'a')), 0s);
  REQUIRE(out.size() == 1);
  CHECK(out[0].chunk_id == 3);
  CHECK(r.chunks().size() == 3);
  CHECK(r.duplicates() == 1);
}

TEST_CASE("receiver ignores frames for other nodes and out-of-order chunks") {
  const auto p = params_for(testutil::radio_config(7, 125000));
  Receiver r(1, 0, "a", p);
  r.begin(0s);
  CHECK(r.on_frame(data(1, "x", 0, 7), 0s).empty());
  CHECK(r.on_frame(data(1, "x", 5, 1), 0s).empty());
  CHECK(r.on_frame(data(3, "x"), 0s).empty());
  CHECK(r.protocol_errors() == 1);
  CHECK(r.last_acked() == 0);
}

TEST_CASE("receiver timeouts re-request, re-ack and finally fail") {
  auto p = params_for(testutil::radio_config(7, 125000), 2);
  Receiver r(1, 0, "a", p);
  r.begin(0s);
  auto out = r.on_timeout(1s);
  REQUIRE(out.size() == 1);
  CHECK(out[0].kind == FrameKind::request);
  r.on_frame(data(1, std::string(250, 'a')), 2s);
  out = r.on_timeout(3s);
  REQUIRE(out.size() == 1);
  CHECK(out[0] == make_ack(1, 0, 1));
  CHECK(r.retries() == 2);
  CHECK(r.on_timeout(4s).empty());
  CHECK(r.phase() == ReceiverPhase::failed);
  CHECK(r.retries() <= p.max_retry);
}

TEST_CASE("sender walks the chunks and handles stale and future acks") {
  const auto p = params_for(testutil::radio_config(7, 125000), 1);
  Sender s(0, p);
  const Bytes body = testutil::html_page(600);
  auto out = s.on_request(1, WebPage{"a", 3, body}, 0s);
  REQUIRE(out.size() == 1);
  CHECK(out[0].chunk_id == 1);
  CHECK(s.chunk_count() == 3);
  CHECK(s.phase() == SenderPhase::sending);
  CHECK(s.on_ack(make_ack(1, 0, 0), 0s).empty());  // still going out
  s.on_sent();
  CHECK(s.phase() == SenderPhase::awaiting_ack);
  CHECK(s.on_ack(make_ack(1, 0, 5), 0s).empty());
  CHECK(s.protocol_errors() == 1);
  out = s.on_ack(make_ack(1, 0, 1), 0s);
  REQUIRE(out.size() == 1);
  CHECK(out[0].chunk_id == 2);
  s.on_sent();
  out = s.on_ack(make_ack(1, 0, 1), 0s);
  REQUIRE(out.size() == 1);
  CHECK(out[0].chunk_id == 2);
  CHECK(s.retransmissions() == 1);
  s.on_sent();
  out = s.on_timeout(0s);
  REQUIRE(out.size() == 1);
  CHECK(out[0].chunk_id == 2);
  s.on_sent();
  CHECK(s.on_timeout(0s).empty());
  CHECK(s.phase() == SenderPhase::failed);
}

TEST_CASE("unknown page is answered with a single not-found chunk") {
  const auto p = params_for(testutil::radio_config(7, 125000));
  Sender s(0, p);
  auto out = s.on_request(1, std::nullopt, 0s);
  REQUIRE(out.size() == 1);
  CHECK(framing::is_terminal(out[0].payload));
  CHECK(is_not_found(out[0].payload));
  CHECK(s.chunk_count() == 1);

  Rig rig;
  const auto st = run_transfer(rig.net, 0, 1, "missing.html", testutil::single_page("a", testutil::html_page(100)),
                               params_for(rig.cfg));
  CHECK(st.outcome == TransferOutcome::success);
  CHECK(st.not_found);
  CHECK(st.chunks_delivered == 1);
}

TEST_CASE("lossless 1500-byte transfer") {
  Rig rig;
  const Bytes body = testutil::html_page(1500);
  const auto st = run_transfer(rig.net, 0, 1, "index.html", testutil::single_page("index.html", body),
                               params_for(rig.cfg));
  CHECK(st.outcome == TransferOutcome::success);
  CHECK(st.body == body);
  CHECK(st.chunks_delivered == 6);
  CHECK(st.retransmissions == 0);
  CHECK(st.sender_phase == SenderPhase::done);
  CHECK(testutil::count_frames(rig.net.log(), "DATA") == 6);
  CHECK(testutil::count_frames(rig.net.log(), "ACK") == 6);
  CHECK(testutil::count_frames(rig.net.log(), "REQUEST") == 1);
  REQUIRE(st.first_packet_time.has_value());
  CHECK(*st.completion_time >= *st.first_packet_time);
}

TEST_CASE("a lost ACK 2 costs exactly one retransmission of chunk 2") {
  Rig rig;
  bool dropped = false;
  rig.net.set_loss_hook([&](const Frame& f, std::uint64_t) {
    if (!dropped && f.kind == FrameKind::ack && f.chunk_id == 2) return dropped = true;
    return false;
  });
  const Bytes body = testutil::html_page(1500);
  const auto st = run_transfer(rig.net, 0, 1, "p", testutil::single_page("p", body), params_for(rig.cfg));
  CHECK(dropped);
  CHECK(st.outcome == TransferOutcome::success);
  CHECK(st.body == body);
  CHECK(st.retransmissions == 1);
  std::vector<std::uint16_t> data_ids;
  for (const auto& r : rig.net.log().records())
    if (r.event == "tx_start" && r.frame.rfind("DATA", 0) == 0)
      data_ids.push_back(static_cast<std::uint16_t>(std::stoi(r.frame.substr(r.frame.find('#') + 1))));
  CHECK(data_ids == std::vector<std::uint16_t>{1, 2, 2, 3, 4, 5, 6});
}

TEST_CASE("a lost request is re-sent by the receiver") {
  Rig rig;
  rig.net.set_loss_hook([](const Frame&, std::uint64_t i) { return i == 0; });
  const Bytes body = testutil::html_page(300);
  const auto st = run_transfer(rig.net, 0, 1, "p", testutil::single_page("p", body), params_for(rig.cfg));
  CHECK(st.outcome == TransferOutcome::success);
  CHECK(st.receiver_reemissions == 1);
  CHECK(testutil::count_frames(rig.net.log(), "REQUEST") == 2);
}

TEST_CASE("a lost final ACK is recovered while the receiver lingers") {
  Rig rig;
  bool dropped = false;
  rig.net.set_loss_hook([&](const Frame& f, std::uint64_t) {
    if (!dropped && f.kind == FrameKind::ack && f.chunk_id == 2) return dropped = true;
    return false;
  });
  const auto st = run_transfer(rig.net, 0, 1, "p", testutil::single_page("p", testutil::html_page(400)),
                               params_for(rig.cfg));
  CHECK(st.outcome == TransferOutcome::success);
  CHECK(st.sender_phase == SenderPhase::done);
  CHECK(st.retransmissions == 1);
}

TEST_CASE("a channel that drops everything fails on both sides") {
  SUBCASE("request never arrives") {
    radio::ChannelModel lossy;
    lossy.random_drop_probability = 1.0;
    Rig rig(lossy);
    const auto st = run_transfer(rig.net, 0, 1, "p", testutil::single_page("p", testutil::html_page(600)),
                                 params_for(rig.cfg));
    CHECK(st.outcome == TransferOutcome::failure);
    CHECK(st.receiver_phase == ReceiverPhase::failed);
    CHECK(st.receiver_reemissions == 5);
    CHECK(testutil::count_frames(rig.net.log(), "REQUEST") == 6);
  }
  SUBCASE("every data frame is lost") {
    Rig rig;
    rig.net.set_loss_hook([](const Frame& f, std::uint64_t) { return f.kind == FrameKind::data; });
    const auto st = run_transfer(rig.net, 0, 1, "p", testutil::single_page("p", testutil::html_page(600)),
                                 params_for(rig.cfg));
    CHECK(st.outcome == TransferOutcome::failure);
    CHECK(st.receiver_phase == ReceiverPhase::failed);
    CHECK(st.sender_phase == SenderPhase::failed);
    // five timeouts plus one resync per repeated REQUEST
    CHECK(st.retransmissions == 10);
    CHECK(testutil::count_frames(rig.net.log(), "DATA") == 1 + st.retransmissions);
  }
}

TEST_CASE("completeness under fewer losses than the retry budget") {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 200; ++trial) {
    Rig rig;
    const std::size_t size = std::uniform_int_distribution<std::size_t>(7, 16384)(gen);
    const Bytes body = testutil::html_page(size, gen());
    const int losses = std::uniform_int_distribution<int>(0, 4)(gen);
    std::vector<std::uint64_t> drop;
    const std::uint64_t horizon = 2 * (size / 250 + 2);
    for (int i = 0; i < losses; ++i) drop.push_back(std::uniform_int_distribution<std::uint64_t>(0, horizon)(gen));
    rig.net.set_loss_hook([&](const Frame&, std::uint64_t i) {
      return std::find(drop.begin(), drop.end(), i) != drop.end();
    });
    const auto st = run_transfer(rig.net, 0, 1, "p", testutil::single_page("p", body), params_for(rig.cfg, 5));
    REQUIRE(st.outcome == TransferOutcome::success);
    REQUIRE(st.body == body);
  }
}

TEST_CASE("unbounded retries over a half-lossy channel always deliver the exact page") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 100; ++trial) {
    radio::ChannelModel ch;
    ch.random_drop_probability = 0.5;
    ch.seed = gen();
    Rig rig(ch);
    const Bytes body = testutil::html_page(std::uniform_int_distribution<std::size_t>(7, 16384)(gen), gen());
    const auto st = run_transfer(rig.net, 0, 1, "p", testutil::single_page("p", body),
                                 params_for(rig.cfg, kUnboundedRetries));
    REQUIRE(st.outcome == TransferOutcome::success);
    REQUIRE(st.body == body);
  }
}

TEST_CASE("without retries a loss yields failure or an intact page") {
  std::mt19937_64 gen(5);
  int failures = 0;
  for (int trial = 0; trial < 200; ++trial) {
    radio::ChannelModel ch;
    ch.random_drop_probability = 0.05;
    ch.seed = gen();
    Rig rig(ch);
    const Bytes body = testutil::html_page(std::uniform_int_distribution<std::size_t>(7, 4000)(gen), gen());
    const auto st = run_transfer(rig.net, 0, 1, "p", testutil::single_page("p", body), params_for(rig.cfg, 0));
    if (st.outcome == TransferOutcome::success) {
      REQUIRE(st.body == body);
    } else {
      ++failures;
    }
  }
  CHECK(failures > 0);
}

TEST_CASE("stop-and-wait: chunk k+1 never starts before ACK k was heard") {
  radio::ChannelModel ch;
  ch.random_drop_probability = 0.3;
  ch.seed = 8;
  Rig rig(ch);
  const auto st = run_transfer(rig.net, 0, 1, "p", testutil::single_page("p", testutil::html_page(5000)),
                               params_for(rig.cfg, kUnboundedRetries));
  REQUIRE(st.outcome == TransferOutcome::success);
  std::uint16_t heard_ack = 0;
  std::uint16_t last_data = 0;
  for (const auto& r : rig.net.log().records()) {
    const auto id = [&] { return static_cast<std::uint16_t>(std::stoi(r.frame.substr(r.frame.find('#') + 1))); };
    if (r.event == "tx_end" && r.frame.rfind("ACK", 0) == 0 && field_value(r.fields, "rx") == "ok")
      heard_ack = std::max(heard_ack, id());
    if (r.event == "tx_start" && r.frame.rfind("DATA", 0) == 0) {
      REQUIRE(id() <= heard_ack + 1);
      REQUIRE(id() >= last_data);
      last_data = id();
    }
  }
}

TEST_CASE("receiver failure is followed by sender failure within one timeout period") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    radio::ChannelModel ch;
    ch.random_drop_probability = 0.35;
    ch.seed = seed;
    Rig rig(ch);
    const auto p = params_for(rig.cfg, 2);
    const auto st = run_transfer(rig.net, 0, 1, "p", testutil::single_page("p", testutil::html_page(2000)), p);
    if (st.receiver_phase != ReceiverPhase::failed || st.sender_phase == SenderPhase::idle) continue;
    SimTime receiver_failed{}, sender_failed{};
    for (const auto& r : rig.net.log().records()) {
      if (r.event == "req_done") receiver_failed = r.time;
      if (r.event == "transfer_end") sender_failed = r.time;
    }
    CHECK(st.sender_phase == SenderPhase::failed);
    CHECK(sender_failed <= receiver_failed + p.receive_timeout);
  }
}
