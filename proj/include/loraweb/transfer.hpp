#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "loraweb/framing.hpp"
#include "loraweb/network.hpp"

namespace loraweb::transfer {

using framing::Frame;
using Frames = std::vector<Frame>;

struct WebPage {
  std::string name;
  std::uint32_t version = 0;
  Bytes body;
};

// Body sent for an unknown url, as a single terminal chunk.
inline constexpr std::string_view kNotFoundBody = "<html><body>404 NOT_FOUND</body></html>";
bool is_not_found(std::span<const std::uint8_t> body);

// A page lookup returns nothing for unknown names.
using PageLookup = std::function<std::optional<WebPage>(const std::string& name)>;

inline constexpr int kUnboundedRetries = std::numeric_limits<int>::max();

struct ArqParams {
  // Sender wait after a DATA frame leaves the air.
  Duration ack_timeout{};
  // Receiver wait for the next chunk after its ACK leaves the air.
  Duration receive_timeout{};
  // Receiver wait for chunk 1 after the REQUEST leaves the air; covers time
  // spent in the server's queue.
  Duration first_response_timeout{};
  // How long a finished receiver keeps answering duplicates of its last chunk.
  Duration linger{};
  int max_retry = 5;

  void validate() const;
};

ArqParams default_arq_params(const radio::RadioConfig& radio, const radio::NetworkOptions& options = {});

// REQUEST frames carry flags in chunk_id.
inline constexpr std::uint16_t kWantVersionFlag = 0x0001;

Frame make_request(NodeId src, NodeId dst, std::string_view url, std::uint16_t flags = 0);
Frame make_ack(NodeId src, NodeId dst, std::uint16_t chunk_id);
Bytes encode_version(std::uint32_t version);
std::optional<std::uint32_t> decode_version(std::span<const std::uint8_t> payload);

// ---------------------------------------------------------------------------
// Receiver (client side of a page transfer)

enum class ReceiverPhase { idle, awaiting_chunks, done, failed };
std::string_view phase_name(ReceiverPhase phase);

class Receiver {
 public:
  Receiver(NodeId self, NodeId server, std::string url, ArqParams params, std::uint16_t request_flags = 0);

  Frames begin(SimTime now);
  Frames on_frame(const Frame& frame, SimTime now);
  Frames on_timeout(SimTime now);

  ReceiverPhase phase() const { return phase_; }
  bool active() const { return phase_ == ReceiverPhase::awaiting_chunks; }
  std::uint16_t last_acked() const { return last_acked_; }
  int retries() const { return retries_; }
  const framing::ChunkSet& chunks() const { return chunks_; }
  Bytes body() const { return framing::reassemble(chunks_); }
  const std::string& url() const { return url_; }
  NodeId server() const { return server_; }
  const ArqParams& params() const { return params_; }
  // Wait to arm after the receiver's latest emission leaves the air.
  Duration current_timeout() const {
    return last_acked_ == 0 ? params_.first_response_timeout : params_.receive_timeout;
  }

  std::optional<SimTime> first_packet_time() const { return first_packet_; }
  std::optional<SimTime> completion_time() const { return completion_; }
  std::uint64_t duplicates() const { return duplicates_; }
  std::uint64_t protocol_errors() const { return protocol_errors_; }
  std::uint64_t reemissions() const { return reemissions_; }

 private:
  NodeId self_;
  NodeId server_;
  std::string url_;
  ArqParams params_;
  std::uint16_t flags_;
  ReceiverPhase phase_ = ReceiverPhase::idle;
  std::uint16_t last_acked_ = 0;
  int retries_ = 0;
  framing::ChunkSet chunks_;
  std::optional<SimTime> first_packet_;
  std::optional<SimTime> completion_;
  std::uint64_t duplicates_ = 0;
  std::uint64_t protocol_errors_ = 0;
  std::uint64_t reemissions_ = 0;
};

// ---------------------------------------------------------------------------
// Sender (server side of a page transfer)

enum class SenderPhase { idle, sending, awaiting_ack, done, failed };
std::string_view phase_name(SenderPhase phase);

class Sender {
 public:
  Sender(NodeId self, ArqParams params);

  // Slices the page and emits chunk 1. A missing page becomes the NOT_FOUND
  // marker.
  Frames on_request(NodeId client, const std::optional<WebPage>& page, SimTime now);
  Frames on_ack(const Frame& ack, SimTime now);
  Frames on_timeout(SimTime now);
  // Re-emits the outstanding chunk unless it is still waiting to go out.
  Frames resend(SimTime now);
  // The outstanding chunk has left the air.
  void on_sent() {
    if (phase_ == SenderPhase::sending) phase_ = SenderPhase::awaiting_ack;
  }

  SenderPhase phase() const { return phase_; }
  bool active() const { return phase_ == SenderPhase::sending || phase_ == SenderPhase::awaiting_ack; }
  NodeId peer() const { return peer_; }
  std::uint16_t current_chunk() const { return current_; }
  std::size_t chunk_count() const { return chunks_.size(); }
  const WebPage& page() const { return page_; }
  bool not_found() const { return not_found_; }
  int retries() const { return retries_; }
  std::uint64_t retransmissions() const { return retransmissions_; }
  std::uint64_t protocol_errors() const { return protocol_errors_; }
  const std::optional<Frame>& outstanding() const { return outstanding_; }
  std::optional<SimTime> completion_time() const { return completion_; }

 private:
  Frames emit_current();

  NodeId self_;
  ArqParams params_;
  SenderPhase phase_ = SenderPhase::idle;
  NodeId peer_ = 0;
  WebPage page_;
  bool not_found_ = false;
  std::vector<Bytes> chunks_;
  std::uint16_t current_ = 0;
  std::optional<Frame> outstanding_;
  int retries_ = 0;
  std::uint64_t retransmissions_ = 0;
  std::uint64_t protocol_errors_ = 0;
  std::optional<SimTime> completion_;
};

// ---------------------------------------------------------------------------
// Client-side stations

// A unit of client radio work: one page transfer, version check or ping.
class Exchange {
 public:
  virtual ~Exchange() = default;
  virtual Frames begin(SimTime now) = 0;
  virtual Frames on_frame(const Frame& frame, SimTime now) = 0;
  virtual Frames on_timeout(SimTime now) = 0;
  // Wait to arm once the latest emission has left the air; zero disables.
  virtual Duration timeout() const = 0;
  virtual bool listening() const = 0;
  // Result available; the station may still be lingering.
  virtual bool completed() const = 0;
  // Station can be released.
  virtual bool finished() const = 0;
  // First response frame received.
  virtual std::optional<SimTime> first_response() const = 0;
  // key=value fields for the req_done log record.
  virtual std::string summary() const = 0;
};

// Page transfer as an exchange: REQUEST, chunks, optional version trailer
// and a short linger for duplicates of the final chunk.
class TransferExchange : public Exchange {
 public:
  TransferExchange(NodeId self, NodeId server, std::string url, ArqParams params, bool want_version);

  Frames begin(SimTime now) override;
  Frames on_frame(const Frame& frame, SimTime now) override;
  Frames on_timeout(SimTime now) override;
  Duration timeout() const override;
  bool listening() const override;
  bool completed() const override { return !receiver_.active() && receiver_.phase() != ReceiverPhase::idle; }
  bool finished() const override { return completed() && !lingering_; }
  std::optional<SimTime> first_response() const override { return receiver_.first_packet_time(); }
  std::string summary() const override;

  const Receiver& receiver() const { return receiver_; }
  bool success() const { return receiver_.phase() == ReceiverPhase::done; }
  std::optional<std::uint32_t> trailer_version() const { return trailer_version_; }
  bool trailer_not_found() const { return trailer_not_found_; }

 private:
  void enter_linger();

  Receiver receiver_;
  bool want_version_;
  bool lingering_ = false;
  std::optional<std::uint32_t> trailer_version_;
  bool trailer_not_found_ = false;
};

// Runs one exchange at a time on behalf of a client node and logs
// request-level events (req_emit, first_rx, req_done) for metrics.
class ExchangeStation : public radio::Station {
 public:
  using Callback = std::function<void(Exchange&, radio::Network&)>;

  explicit ExchangeStation(NodeId id) : id_(id) {}

  // `on_complete` fires once when the result is available, `on_release` when
  // the station is free for the next exchange.
  void start(std::unique_ptr<Exchange> exchange, radio::Network& net, std::uint64_t request_id,
             Callback on_complete = {}, Callback on_release = {});
  bool busy() const { return exchange_ != nullptr; }
  Exchange* current() { return exchange_.get(); }
  // Start of the first frame of the latest exchange.
  std::optional<SimTime> emitted_at() const { return emitted_at_; }

  NodeId id() const override { return id_; }
  bool listening() const override { return exchange_ && exchange_->listening(); }
  void on_frame(const Frame& frame, const radio::LinkQuality& quality, radio::Network& net) override;
  void on_timer(std::uint64_t tag, radio::Network& net) override;
  void on_tx_start(radio::TxId tx, const Frame& frame, radio::Network& net) override;
  void on_tx_end(radio::TxId tx, const Frame& frame, radio::Network& net) override;

 private:
  void emit(Frames frames, radio::Network& net);
  void settle(radio::Network& net);

  NodeId id_;
  std::unique_ptr<Exchange> exchange_;
  std::uint64_t request_id_ = 0;
  Callback on_complete_;
  Callback on_release_;
  bool reported_ = false;
  bool first_logged_ = false;
  std::optional<radio::TxId> first_tx_;
  std::optional<radio::TxId> last_tx_;
  std::optional<SimTime> emitted_at_;
  std::uint64_t generation_ = 0;
};

// ---------------------------------------------------------------------------
// Server-side station

// Answers REQUEST and VERSION_QUERY frames. Page requests are served one at a
// time in arrival order; a client has at most one queued request.
class ServerStation : public radio::Station {
 public:
  ServerStation(NodeId id, PageLookup lookup, ArqParams params);

  NodeId id() const override { return id_; }
  bool listening() const override { return true; }
  void on_frame(const Frame& frame, const radio::LinkQuality& quality, radio::Network& net) override;
  void on_timer(std::uint64_t tag, radio::Network& net) override;
  void on_tx_end(radio::TxId tx, const Frame& frame, radio::Network& net) override;

  const ArqParams& params() const { return params_; }
  std::size_t queued() const { return queue_.size(); }
  bool transferring() const { return sender_ && sender_->active(); }
  const Sender* sender() const { return sender_.get(); }
  std::uint64_t transfers_started() const { return started_; }
  std::uint64_t transfers_succeeded() const { return succeeded_; }
  std::uint64_t transfers_failed() const { return failed_; }
  std::uint64_t retransmissions() const { return retransmissions_; }

 protected:
  // Frames other than REQUEST, ACK and VERSION_QUERY.
  virtual void on_other_frame(const Frame&, radio::Network&) {}
  void emit(Frames frames, radio::Network& net);

 private:
  struct Pending {
    NodeId client;
    std::string url;
    std::uint16_t flags;
  };
  void start_next(radio::Network& net);
  void begin_transfer(Pending request, radio::Network& net);
  void finish_transfer(radio::Network& net);

  NodeId id_;
  PageLookup lookup_;
  ArqParams params_;
  std::deque<Pending> queue_;
  std::unique_ptr<Sender> sender_;
  Pending active_{};
  std::optional<radio::TxId> data_tx_;
  std::uint64_t generation_ = 0;
  std::uint64_t started_ = 0;
  std::uint64_t succeeded_ = 0;
  std::uint64_t failed_ = 0;
  std::uint64_t retransmissions_ = 0;
};

// ---------------------------------------------------------------------------

enum class TransferOutcome { success, failure };

struct TransferStatus {
  TransferOutcome outcome = TransferOutcome::failure;
  std::size_t chunks_delivered = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t receiver_reemissions = 0;
  SimTime request_time{};
  std::optional<SimTime> first_packet_time;
  std::optional<SimTime> completion_time;
  bool not_found = false;
  Bytes body;
  ReceiverPhase receiver_phase = ReceiverPhase::idle;
  SenderPhase sender_phase = SenderPhase::idle;
};

// Attaches a server and a client to `net`, fetches `url` and runs until both
// state machines are terminal and the channel is idle. Both stations are
// detached on return.
TransferStatus run_transfer(radio::Network& net, NodeId sender, NodeId receiver, const std::string& url,
                            PageLookup lookup, const ArqParams& params);

}  // namespace loraweb::transfer
