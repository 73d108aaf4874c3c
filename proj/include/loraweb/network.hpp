#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "loraweb/event_log.hpp"
#include "loraweb/framing.hpp"
#include "loraweb/radio.hpp"

namespace loraweb::radio {

using TxId = std::uint64_t;

class Network;

// A radio endpoint attached to the shared channel. All callbacks run on the
// network's event loop.
class Station {
 public:
  virtual ~Station() = default;

  virtual NodeId id() const = 0;
  // Whether the receiver is on. Frames that reach a station that is not
  // listening are dropped by the station, not by the channel.
  virtual bool listening() const = 0;

  virtual void on_frame(const framing::Frame& frame, const LinkQuality& quality, Network& net) = 0;
  virtual void on_timer(std::uint64_t tag, Network& net) = 0;
  virtual void on_tx_start(TxId, const framing::Frame&, Network&) {}
  virtual void on_tx_end(TxId, const framing::Frame&, Network&) {}
};

struct NetworkOptions {
  Duration turnaround = std::chrono::milliseconds(5);
  Duration processing = Duration::zero();
  Duration duty_window = std::chrono::seconds(10);
};

struct ChannelStats {
  std::uint64_t frames = 0;
  std::uint64_t delivered = 0;
  std::uint64_t heard = 0;
  std::uint64_t collisions = 0;
  std::uint64_t fades = 0;
};

// Single-channel discrete-event engine. Events are ordered by
// (time, node id, sequence number).
class Network {
 public:
  Network(RadioConfig radio, ChannelModel channel, NetworkOptions options = {});
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  void attach(Station& station);
  // Drops the station, its queued frames and its pending timers.
  void detach(NodeId id);
  bool attached(NodeId id) const;

  SimTime now() const { return now_; }
  const RadioConfig& radio() const { return radio_; }
  const ChannelModel& channel() const { return channel_; }
  const NetworkOptions& options() const { return options_; }
  Duration airtime(const framing::Frame& frame) const { return time_on_air(radio_, frame.wire_size()); }

  // Queue a frame; it starts no earlier than now + processing + turnaround,
  // after any frames already queued at this node, and when the duty-cycle
  // budget admits it.
  TxId send(NodeId from, framing::Frame frame);
  TxId send_at(NodeId from, framing::Frame frame, SimTime earliest);

  // Scripted loss for tests: called with a running index for every frame that
  // escaped collision and random fading; returning true fades it.
  using LossHook = std::function<bool(const framing::Frame&, std::uint64_t index)>;
  void set_loss_hook(LossHook hook) { loss_hook_ = std::move(hook); }

  void set_timer(NodeId node, SimTime at, std::uint64_t tag);
  void post(SimTime at, NodeId owner, std::function<void(Network&)> action);

  // Processes one event; false when the queue is empty.
  bool step();
  // Processes events up to and including `limit`.
  void run_until(SimTime limit);
  // Processes events until `done()` holds, the queue drains or the next event
  // lies past `limit`. Returns done().
  bool run_until(const std::function<bool()>& done, SimTime limit);

  // No frame on air and none queued.
  bool radio_idle() const;
  bool node_transmitting(NodeId id) const;
  std::size_t pending_events() const { return queue_.size(); }
  std::optional<SimTime> next_event_time() const;

  EventLog& log() { return log_; }
  const EventLog& log() const { return log_; }
  const ChannelStats& stats() const { return stats_; }
  const AirtimeBudget& budget(NodeId id) const;
  // Unique ids for request-level log records.
  std::uint64_t next_request_id() { return ++request_ids_; }

 private:
  struct PendingTx {
    TxId id;
    framing::Frame frame;
    SimTime earliest;
  };
  struct NodeState {
    Station* station = nullptr;
    std::unique_ptr<AirtimeBudget> budget;
    std::deque<PendingTx> queue;
    bool start_scheduled = false;
    bool on_air = false;
  };
  struct ActiveTx {
    TxId id;
    NodeId src;
    framing::Frame frame;
    SimTime start;
    SimTime end;
    bool collided = false;
  };
  enum class EventType { tx_start, tx_end, timer, action };
  struct Event {
    SimTime time;
    NodeId node;
    std::uint64_t seq;
    EventType type;
    std::uint64_t value = 0;  // tx id or timer tag
    std::function<void(Network&)> action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const;
  };

  NodeState& node_state(NodeId id);
  void push(Event ev);
  void schedule_next_tx(NodeId id);
  void handle_tx_start(NodeId id);
  void handle_tx_end(TxId id);

  RadioConfig radio_;
  ChannelModel channel_;
  NetworkOptions options_;
  Rng fade_rng_;
  Rng quality_rng_;
  SimTime now_{};
  std::uint64_t seq_ = 0;
  TxId next_tx_ = 1;
  std::vector<Event> queue_;
  std::map<NodeId, NodeState> nodes_;
  std::vector<ActiveTx> active_;
  EventLog log_;
  ChannelStats stats_;
  std::uint64_t request_ids_ = 0;
  LossHook loss_hook_;
  std::uint64_t hook_index_ = 0;
};

}  // namespace loraweb::radio
