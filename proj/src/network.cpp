#include "loraweb/network.hpp"

#include <algorithm>

namespace loraweb::radio {

bool Network::Later::operator()(const Event& a, const Event& b) const {
  if (a.time != b.time) return a.time > b.time;
  if (a.node != b.node) return a.node > b.node;
  return a.seq > b.seq;
}

Network::Network(RadioConfig radio, ChannelModel channel, NetworkOptions options)
    : radio_(radio),
      channel_(channel),
      options_(options),
      fade_rng_(Rng::stream(channel.seed, kFadeStream)),
      quality_rng_(Rng::stream(channel.seed, kLinkQualityStream)) {
  radio_.validate();
  channel_.validate();
  if (options_.turnaround < Duration::zero() || options_.processing < Duration::zero())
    throw ConfigError("turnaround and processing delays must be non-negative");
}

void Network::attach(Station& station) {
  auto& st = node_state(station.id());
  if (st.station != nullptr && st.station != &station)
    throw ConfigError("node id " + std::to_string(station.id()) + " attached twice");
  st.station = &station;
}

void Network::detach(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) return;
  it->second.station = nullptr;
  it->second.queue.clear();
  std::erase_if(queue_, [&](const Event& ev) { return ev.type == EventType::timer && ev.node == id; });
  std::make_heap(queue_.begin(), queue_.end(), Later{});
}

bool Network::attached(NodeId id) const {
  auto it = nodes_.find(id);
  return it != nodes_.end() && it->second.station != nullptr;
}

Network::NodeState& Network::node_state(NodeId id) {
  auto [it, inserted] = nodes_.try_emplace(id);
  if (inserted) it->second.budget = std::make_unique<AirtimeBudget>(id, options_.duty_window, radio_.duty_cycle);
  return it->second;
}

const AirtimeBudget& Network::budget(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw NotFoundError("no such node: " + std::to_string(id));
  return *it->second.budget;
}

void Network::push(Event ev) {
  ev.seq = seq_++;
  queue_.push_back(std::move(ev));
  std::push_heap(queue_.begin(), queue_.end(), Later{});
}

TxId Network::send(NodeId from, framing::Frame frame) {
  return send_at(from, std::move(frame), now_ + options_.processing + options_.turnaround);
}

TxId Network::send_at(NodeId from, framing::Frame frame, SimTime earliest) {
  if (frame.payload.size() > framing::kMaxPayload)
    throw ValidationError("frame payload exceeds " + std::to_string(framing::kMaxPayload) + " bytes");
  frame.src = from;
  auto& st = node_state(from);
  // Fail early on an airtime the duty cycle can never admit.
  (void)st.budget->earliest_start(earliest, airtime(frame));
  const TxId id = next_tx_++;
  st.queue.push_back(PendingTx{id, std::move(frame), std::max(earliest, now_)});
  schedule_next_tx(from);
  return id;
}

void Network::set_timer(NodeId node, SimTime at, std::uint64_t tag) {
  push(Event{std::max(at, now_), node, 0, EventType::timer, tag, {}});
}

void Network::post(SimTime at, NodeId owner, std::function<void(Network&)> action) {
  push(Event{std::max(at, now_), owner, 0, EventType::action, 0, std::move(action)});
}

void Network::schedule_next_tx(NodeId id) {
  auto& st = node_state(id);
  if (st.queue.empty() || st.start_scheduled || st.on_air) return;
  const auto& next = st.queue.front();
  const SimTime start = st.budget->earliest_start(std::max(next.earliest, now_), airtime(next.frame));
  st.start_scheduled = true;
  push(Event{start, id, 0, EventType::tx_start, next.id, {}});
}

void Network::handle_tx_start(NodeId id) {
  auto& st = node_state(id);
  st.start_scheduled = false;
  if (st.queue.empty()) return;  // detached while waiting
  PendingTx tx = std::move(st.queue.front());
  st.queue.pop_front();

  const Duration toa = airtime(tx.frame);
  st.budget->record(now_, toa);
  st.on_air = true;

  ActiveTx active{tx.id, id, std::move(tx.frame), now_, now_ + toa, false};
  for (auto& other : active_) {
    if (other.end > active.start) {
      other.collided = true;
      active.collided = true;
    }
  }
  log_.append(now_, id, "tx_start", framing::describe(active.frame), "-",
              "tx=" + std::to_string(active.id) + " dst=" + std::to_string(active.frame.dst) +
                  " toa_ns=" + std::to_string(toa.count()));
  push(Event{active.end, id, 0, EventType::tx_end, active.id, {}});
  const framing::Frame frame_copy = active.frame;
  active_.push_back(std::move(active));
  ++stats_.frames;
  if (st.station != nullptr) st.station->on_tx_start(tx.id, frame_copy, *this);
}

void Network::handle_tx_end(TxId id) {
  auto it = std::find_if(active_.begin(), active_.end(), [&](const ActiveTx& a) { return a.id == id; });
  if (it == active_.end()) return;
  ActiveTx tx = std::move(*it);
  active_.erase(it);

  ChannelOutcome outcome = ChannelOutcome::delivered;
  if (tx.collided) {
    outcome = ChannelOutcome::lost_collision;
    ++stats_.collisions;
  } else if ((channel_.drop_applies(tx.frame.kind) && fade_rng_.bernoulli(channel_.random_drop_probability)) ||
             (loss_hook_ && loss_hook_(tx.frame, hook_index_++))) {
    outcome = ChannelOutcome::lost_fade;
    ++stats_.fades;
  } else {
    ++stats_.delivered;
  }

  Station* receiver = nullptr;
  std::string rx = "none";
  if (outcome == ChannelOutcome::delivered) {
    auto dst = nodes_.find(tx.frame.dst);
    if (dst != nodes_.end() && dst->second.station != nullptr) {
      if (dst->second.station->listening()) {
        receiver = dst->second.station;
        rx = "ok";
      } else {
        rx = "off";
      }
    }
  }
  log_.append(now_, tx.src, "tx_end", framing::describe(tx.frame), std::string(outcome_name(outcome)),
              "tx=" + std::to_string(tx.id) + " dst=" + std::to_string(tx.frame.dst) + " rx=" + rx);

  auto& st = node_state(tx.src);
  st.on_air = false;
  if (st.station != nullptr) st.station->on_tx_end(tx.id, tx.frame, *this);
  if (receiver != nullptr) {
    ++stats_.heard;
    const LinkQuality quality = sample_link_quality(channel_, radio_, quality_rng_);
    receiver->on_frame(tx.frame, quality, *this);
  }
  schedule_next_tx(tx.src);
}

std::optional<SimTime> Network::next_event_time() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.front().time;
}

bool Network::step() {
  if (queue_.empty()) return false;
  std::pop_heap(queue_.begin(), queue_.end(), Later{});
  Event ev = std::move(queue_.back());
  queue_.pop_back();
  now_ = ev.time;
  switch (ev.type) {
    case EventType::tx_start: handle_tx_start(ev.node); break;
    case EventType::tx_end: handle_tx_end(ev.value); break;
    case EventType::timer: {
      auto it = nodes_.find(ev.node);
      if (it != nodes_.end() && it->second.station != nullptr) it->second.station->on_timer(ev.value, *this);
      break;
    }
    case EventType::action: ev.action(*this); break;
  }
  return true;
}

void Network::run_until(SimTime limit) {
  while (!queue_.empty() && queue_.front().time <= limit) step();
  now_ = std::max(now_, limit);
}

bool Network::run_until(const std::function<bool()>& done, SimTime limit) {
  while (!done() && !queue_.empty() && queue_.front().time <= limit) step();
  return done();
}

bool Network::radio_idle() const {
  if (!active_.empty()) return false;
  return std::all_of(nodes_.begin(), nodes_.end(), [](const auto& kv) { return kv.second.queue.empty(); });
}

bool Network::node_transmitting(NodeId id) const {
  auto it = nodes_.find(id);
  return it != nodes_.end() && (it->second.on_air || !it->second.queue.empty());
}

}  // namespace loraweb::radio
