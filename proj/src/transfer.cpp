#include "loraweb/transfer.hpp"

#include <algorithm>

namespace loraweb::transfer {

using framing::FrameKind;

bool is_not_found(std::span<const std::uint8_t> body) {
  return std::equal(body.begin(), body.end(), kNotFoundBody.begin(), kNotFoundBody.end());
}

void ArqParams::validate() const {
  if (ack_timeout <= Duration::zero() || receive_timeout <= Duration::zero() ||
      first_response_timeout <= Duration::zero())
    throw ConfigError("ARQ timeouts must be positive");
  if (linger < Duration::zero()) throw ConfigError("linger must be non-negative");
  if (max_retry < 0) throw ConfigError("max_retry must be non-negative");
}

ArqParams default_arq_params(const radio::RadioConfig& radio, const radio::NetworkOptions& options) {
  const Duration data = radio::time_on_air(radio, framing::kMaxFrameSize);
  const Duration ack = radio::time_on_air(radio, framing::kHeaderSize);
  ArqParams p;
  p.ack_timeout = data + data / 2 + ack;
  // Long enough that the sender's own retransmission, including its
  // duty-cycle off-time, lands before the receiver gives up on it.
  p.receive_timeout = 2 * p.ack_timeout + data + 2 * options.turnaround + 2 * options.processing +
                      2 * radio::off_time(data, radio.duty_cycle);
  p.first_response_timeout = p.receive_timeout;
  p.linger = p.receive_timeout;
  p.max_retry = 5;
  return p;
}

Frame make_request(NodeId src, NodeId dst, std::string_view url, std::uint16_t flags) {
  if (url.empty()) throw ValidationError("empty url");
  if (url.size() > framing::kMaxPayload)
    throw ValidationError("url longer than " + std::to_string(framing::kMaxPayload) + " bytes");
  return Frame{src, dst, FrameKind::request, flags, to_bytes(url)};
}

Frame make_ack(NodeId src, NodeId dst, std::uint16_t chunk_id) { return Frame{src, dst, FrameKind::ack, chunk_id, {}}; }

Bytes encode_version(std::uint32_t v) {
  return Bytes{static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
               static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

std::optional<std::uint32_t> decode_version(std::span<const std::uint8_t> p) {
  if (p.size() != 4) return std::nullopt;
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

std::string_view phase_name(ReceiverPhase phase) {
  switch (phase) {
    case ReceiverPhase::idle: return "idle";
    case ReceiverPhase::awaiting_chunks: return "awaiting_chunks";
    case ReceiverPhase::done: return "done";
    case ReceiverPhase::failed: return "failed";
  }
  return "?";
}

std::string_view phase_name(SenderPhase phase) {
  switch (phase) {
    case SenderPhase::idle: return "idle";
    case SenderPhase::sending: return "sending";
    case SenderPhase::awaiting_ack: return "awaiting_ack";
    case SenderPhase::done: return "done";
    case SenderPhase::failed: return "failed";
  }
  return "?";
}

// --- Receiver ---------------------------------------------------------------

Receiver::Receiver(NodeId self, NodeId server, std::string url, ArqParams params, std::uint16_t request_flags)
    : self_(self), server_(server), url_(std::move(url)), params_(params), flags_(request_flags) {
  params_.validate();
}

Frames Receiver::begin(SimTime) {
  if (phase_ != ReceiverPhase::idle) throw Error("receiver already started");
  phase_ = ReceiverPhase::awaiting_chunks;
  return {make_request(self_, server_, url_, flags_)};
}

Frames Receiver::on_frame(const Frame& f, SimTime now) {
  if (f.dst != self_ || f.src != server_ || f.kind != FrameKind::data) return {};
  if (phase_ == ReceiverPhase::done) {
    if (f.chunk_id != 0 && f.chunk_id <= last_acked_) {
      ++duplicates_;
      return {make_ack(self_, server_, f.chunk_id)};
    }
    return {};
  }
  if (phase_ != ReceiverPhase::awaiting_chunks) return {};
  if (!first_packet_) first_packet_ = now;
  if (f.chunk_id == 0) {
    ++protocol_errors_;
    return {};
  }
  if (f.chunk_id <= last_acked_) {
    ++duplicates_;
    return {make_ack(self_, server_, f.chunk_id)};
  }
  if (f.chunk_id != last_acked_ + 1) {
    // Stop-and-wait never skips ahead; a gapped id means a stale or foreign
    // transfer.
    ++protocol_errors_;
    return {};
  }
  chunks_.add(f.chunk_id, f.payload);
  last_acked_ = f.chunk_id;
  if (framing::is_terminal(f.payload)) {
    phase_ = ReceiverPhase::done;
    completion_ = now;
  }
  return {make_ack(self_, server_, f.chunk_id)};
}

Frames Receiver::on_timeout(SimTime now) {
  if (phase_ != ReceiverPhase::awaiting_chunks) return {};
  if (retries_ >= params_.max_retry) {
    phase_ = ReceiverPhase::failed;
    completion_ = now;
    return {};
  }
  ++retries_;
  ++reemissions_;
  if (last_acked_ == 0) return {make_request(self_, server_, url_, flags_)};
  return {make_ack(self_, server_, last_acked_)};
}

// --- Sender -----------------------------------------------------------------

Sender::Sender(NodeId self, ArqParams params) : self_(self), params_(params) { params_.validate(); }

Frames Sender::on_request(NodeId client, const std::optional<WebPage>& page, SimTime) {
  peer_ = client;
  if (page) {
    page_ = *page;
    not_found_ = false;
  } else {
    page_ = WebPage{"", 0, to_bytes(kNotFoundBody)};
    not_found_ = true;
  }
  chunks_ = framing::slice_payload(page_.body);
  if (chunks_.size() > 0xffff) throw ValidationError("page too large for 16-bit chunk ids");
  current_ = 1;
  retries_ = 0;
  return emit_current();
}

Frames Sender::emit_current() {
  outstanding_ = Frame{self_, peer_, FrameKind::data, current_, chunks_[current_ - 1]};
  phase_ = SenderPhase::sending;
  return {*outstanding_};
}

Frames Sender::on_ack(const Frame& ack, SimTime now) {
  if (!active() || ack.kind != FrameKind::ack || ack.src != peer_ || ack.dst != self_) return {};
  if (ack.chunk_id == current_) {
    if (current_ == chunks_.size()) {
      phase_ = SenderPhase::done;
      completion_ = now;
      outstanding_.reset();
      return {};
    }
    ++current_;
    return emit_current();
  }
  if (ack.chunk_id < current_) return resend(now);
  ++protocol_errors_;
  return {};
}

Frames Sender::resend(SimTime) {
  if (phase_ != SenderPhase::awaiting_ack) return {};
  ++retransmissions_;
  return emit_current();
}

Frames Sender::on_timeout(SimTime now) {
  if (phase_ != SenderPhase::awaiting_ack) return {};
  if (retries_ >= params_.max_retry) {
    phase_ = SenderPhase::failed;
    completion_ = now;
    outstanding_.reset();
    return {};
  }
  ++retries_;
  ++retransmissions_;
  return emit_current();
}

// --- TransferExchange ---------------------------------------------------------

TransferExchange::TransferExchange(NodeId self, NodeId server, std::string url, ArqParams params,
                                   bool want_version)
    : receiver_(self, server, std::move(url), params, want_version ? kWantVersionFlag : 0),
      want_version_(want_version) {}

Frames TransferExchange::begin(SimTime now) { return receiver_.begin(now); }

void TransferExchange::enter_linger() {
  const auto& p = receiver_.params();
  lingering_ = p.linger > Duration::zero() && (p.max_retry > 0 || want_version_);
}

Frames TransferExchange::on_frame(const Frame& f, SimTime now) {
  if (f.kind == FrameKind::version_reply) {
    if (want_version_ && receiver_.phase() == ReceiverPhase::done && f.src == receiver_.server() &&
        !trailer_version_ && !trailer_not_found_) {
      trailer_version_ = decode_version(f.payload);
      trailer_not_found_ = !trailer_version_.has_value();
      // The trailer follows the sender's last ACK, so no duplicates remain.
      lingering_ = false;
    }
    return {};
  }
  const bool was_active = receiver_.active();
  Frames out = receiver_.on_frame(f, now);
  if (was_active && receiver_.phase() == ReceiverPhase::done) enter_linger();
  return out;
}

Frames TransferExchange::on_timeout(SimTime now) {
  if (receiver_.active()) return receiver_.on_timeout(now);
  lingering_ = false;
  return {};
}

Duration TransferExchange::timeout() const {
  if (receiver_.active()) return receiver_.current_timeout();
  if (lingering_) return receiver_.params().linger;
  return Duration::zero();
}

bool TransferExchange::listening() const { return receiver_.active() || lingering_; }

std::string TransferExchange::summary() const {
  std::string s = "kind=page url=" + receiver_.url();
  if (success()) {
    const Bytes body = receiver_.body();
    s += is_not_found(body) ? " outcome=not_found" : " outcome=success";
    s += " source=fetched bytes=" + std::to_string(body.size());
  } else {
    s += " outcome=failure source=fetched bytes=0";
  }
  s += " chunks=" + std::to_string(receiver_.last_acked());
  return s;
}

// --- ExchangeStation ----------------------------------------------------------

void ExchangeStation::start(std::unique_ptr<Exchange> exchange, radio::Network& net, std::uint64_t request_id,
                            Callback on_complete, Callback on_release) {
  if (exchange_) throw Error("station " + std::to_string(id_) + " already has an exchange in progress");
  exchange_ = std::move(exchange);
  request_id_ = request_id;
  on_complete_ = std::move(on_complete);
  on_release_ = std::move(on_release);
  reported_ = false;
  first_logged_ = false;
  first_tx_.reset();
  last_tx_.reset();
  emitted_at_.reset();
  net.log().append(net.now(), id_, "req_begin", "-", "-", "req=" + std::to_string(request_id_));
  emit(exchange_->begin(net.now()), net);
  settle(net);
}

void ExchangeStation::emit(Frames frames, radio::Network& net) {
  if (frames.empty()) return;
  ++generation_;
  for (auto& f : frames) {
    const radio::TxId tx = net.send(id_, std::move(f));
    if (!first_tx_) first_tx_ = tx;
    last_tx_ = tx;
  }
}

void ExchangeStation::settle(radio::Network& net) {
  if (!exchange_) return;
  if (!first_logged_ && exchange_->first_response()) {
    first_logged_ = true;
    net.log().append(*exchange_->first_response(), id_, "first_rx", "-", "-", "req=" + std::to_string(request_id_));
  }
  if (exchange_->completed() && !reported_) {
    reported_ = true;
    net.log().append(net.now(), id_, "req_done", "-", "-",
                     "req=" + std::to_string(request_id_) + " " + exchange_->summary());
    if (on_complete_) on_complete_(*exchange_, net);
  }
  if (exchange_ && exchange_->finished()) {
    std::unique_ptr<Exchange> done = std::move(exchange_);
    ++generation_;
    net.log().append(net.now(), id_, "station_free", "-", "-", "req=" + std::to_string(request_id_));
    Callback release = std::move(on_release_);
    on_complete_ = {};
    if (release) release(*done, net);
  }
}

void ExchangeStation::on_frame(const Frame& frame, const radio::LinkQuality&, radio::Network& net) {
  if (!exchange_ || frame.dst != id_) return;
  emit(exchange_->on_frame(frame, net.now()), net);
  settle(net);
}

void ExchangeStation::on_timer(std::uint64_t tag, radio::Network& net) {
  if (!exchange_ || tag != generation_) return;
  Frames frames = exchange_->on_timeout(net.now());
  const bool emitted = !frames.empty();
  emit(std::move(frames), net);
  if (!emitted && exchange_->timeout() > Duration::zero() && !exchange_->finished())
    net.set_timer(id_, net.now() + exchange_->timeout(), generation_);
  settle(net);
}

void ExchangeStation::on_tx_start(radio::TxId tx, const Frame&, radio::Network& net) {
  if (first_tx_ && *first_tx_ == tx && !emitted_at_) {
    emitted_at_ = net.now();
    net.log().append(net.now(), id_, "req_emit", "-", "-", "req=" + std::to_string(request_id_));
  }
}

void ExchangeStation::on_tx_end(radio::TxId tx, const Frame&, radio::Network& net) {
  if (!exchange_ || !last_tx_ || *last_tx_ != tx) return;
  const Duration wait = exchange_->timeout();
  if (wait > Duration::zero() && !exchange_->finished()) net.set_timer(id_, net.now() + wait, generation_);
}

// --- ServerStation ------------------------------------------------------------

ServerStation::ServerStation(NodeId id, PageLookup lookup, ArqParams params)
    : id_(id), lookup_(std::move(lookup)), params_(params) {
  params_.validate();
}

void ServerStation::emit(Frames frames, radio::Network& net) {
  for (auto& f : frames) {
    const bool data = f.kind == FrameKind::data;
    const radio::TxId tx = net.send(id_, std::move(f));
    if (data) {
      data_tx_ = tx;
      ++generation_;
    }
  }
}

void ServerStation::on_frame(const Frame& f, const radio::LinkQuality&, radio::Network& net) {
  if (f.dst != id_) return;
  switch (f.kind) {
    case FrameKind::request: {
      Pending req{f.src, to_string(f.payload), f.chunk_id};
      if (transferring() && sender_->peer() == f.src) {
        if (req.url == active_.url && sender_->current_chunk() == 1) {
          emit(sender_->resend(net.now()), net);
        } else {
          net.log().append(net.now(), id_, "transfer_restart", "-", "-",
                           "client=" + std::to_string(f.src) + " url=" + req.url +
                               " retx=" + std::to_string(sender_->retransmissions()));
          retransmissions_ += sender_->retransmissions();
          begin_transfer(std::move(req), net);
        }
        return;
      }
      for (auto& q : queue_) {
        if (q.client == f.src) {
          q = std::move(req);
          return;
        }
      }
      queue_.push_back(std::move(req));
      net.log().append(net.now(), id_, "server_queue", "-", "-",
                       "client=" + std::to_string(f.src) + " depth=" + std::to_string(queue_.size()));
      if (!transferring()) start_next(net);
      return;
    }
    case FrameKind::ack: {
      if (!transferring() || f.src != sender_->peer()) return;
      emit(sender_->on_ack(f, net.now()), net);
      if (!sender_->active()) finish_transfer(net);
      return;
    }
    case FrameKind::version_query: {
      const std::string url = to_string(f.payload);
      const auto page = lookup_(url);
      net.send(id_, Frame{id_, f.src, FrameKind::version_reply, f.chunk_id,
                          page ? encode_version(page->version) : Bytes{}});
      return;
    }
    default: on_other_frame(f, net); return;
  }
}

void ServerStation::on_tx_end(radio::TxId tx, const Frame&, radio::Network& net) {
  if (!data_tx_ || *data_tx_ != tx || !transferring()) return;
  sender_->on_sent();
  net.set_timer(id_, net.now() + params_.ack_timeout, generation_);
}

void ServerStation::on_timer(std::uint64_t tag, radio::Network& net) {
  if (tag != generation_ || !transferring()) return;
  emit(sender_->on_timeout(net.now()), net);
  if (!sender_->active()) finish_transfer(net);
}

void ServerStation::begin_transfer(Pending request, radio::Network& net) {
  active_ = std::move(request);
  sender_ = std::make_unique<Sender>(id_, params_);
  ++started_;
  const auto page = lookup_(active_.url);
  Frames first = sender_->on_request(active_.client, page, net.now());
  net.log().append(net.now(), id_, "transfer_begin", "-", "-",
                   "client=" + std::to_string(active_.client) + " url=" + active_.url +
                       " chunks=" + std::to_string(sender_->chunk_count()) +
                       (page ? " version=" + std::to_string(page->version) : std::string(" version=none")));
  emit(std::move(first), net);
}

void ServerStation::finish_transfer(radio::Network& net) {
  const bool ok = sender_->phase() == SenderPhase::done;
  ok ? ++succeeded_ : ++failed_;
  retransmissions_ += sender_->retransmissions();
  net.log().append(net.now(), id_, "transfer_end", "-", ok ? "done" : "failed",
                   "client=" + std::to_string(active_.client) + " url=" + active_.url +
                       " retx=" + std::to_string(sender_->retransmissions()));
  if (ok && (active_.flags & kWantVersionFlag)) {
    net.send(id_, Frame{id_, active_.client, FrameKind::version_reply, 0,
                        sender_->not_found() ? Bytes{} : encode_version(sender_->page().version)});
  }
  ++generation_;
  start_next(net);
}

void ServerStation::start_next(radio::Network& net) {
  if (queue_.empty()) return;
  Pending next = std::move(queue_.front());
  queue_.pop_front();
  begin_transfer(std::move(next), net);
}

// --- run_transfer -------------------------------------------------------------

TransferStatus run_transfer(radio::Network& net, NodeId sender, NodeId receiver, const std::string& url,
                            PageLookup lookup, const ArqParams& params) {
  if (sender == receiver) throw ConfigError("sender and receiver must differ");
  ServerStation server(sender, std::move(lookup), params);
  ExchangeStation client(receiver);
  net.attach(server);
  net.attach(client);

  TransferStatus status;
  status.request_time = net.now();
  bool released = false;
  client.start(
      std::make_unique<TransferExchange>(receiver, sender, url, params, false), net, net.next_request_id(),
      [&](Exchange& ex, radio::Network&) {
        const auto& rx = static_cast<TransferExchange&>(ex).receiver();
        status.receiver_phase = rx.phase();
        status.chunks_delivered = rx.chunks().size();
        status.first_packet_time = rx.first_packet_time();
        status.completion_time = rx.completion_time();
        status.receiver_reemissions = rx.reemissions();
        if (rx.phase() == ReceiverPhase::done) {
          status.outcome = TransferOutcome::success;
          status.body = rx.body();
          status.not_found = is_not_found(status.body);
        }
      },
      [&](Exchange&, radio::Network&) { released = true; });

  // With unbounded retries a sender whose final ACK keeps getting lost never
  // gives up, so a completed receiver ends the run.
  const bool unbounded = params.max_retry == kUnboundedRetries;
  net.run_until(
      [&] {
        if (!released) return false;
        if (unbounded && status.outcome == TransferOutcome::success) return true;
        return !server.transferring() && net.radio_idle();
      },
      SimTime::max());
  if (client.emitted_at()) status.request_time = *client.emitted_at();
  if (const Sender* s = server.sender()) status.sender_phase = s->phase();
  status.retransmissions = server.retransmissions();
  net.detach(client.id());
  net.detach(server.id());
  return status;
}

}  // namespace loraweb::transfer
