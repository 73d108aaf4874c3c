#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <vector>

#include "loraweb/framing.hpp"
#include "loraweb/types.hpp"

namespace loraweb::radio {

struct RadioConfig {
  int spreading_factor = 7;
  std::uint32_t bandwidth_hz = 125000;
  int coding_rate_denominator = 5;  // 4/5 -> 5
  int preamble_symbols = 8;
  int tx_power_dbm = 17;
  double duty_cycle = 1.0;
  bool explicit_header = true;
  bool low_data_rate_optimize = false;
  bool crc_on = true;

  // Throws ConfigError naming the first offending field.
  void validate() const;
};

inline constexpr std::size_t kMaxPhyPayload = framing::kMaxFrameSize;

// Standard LoRa modem airtime: (preamble + 4.25) symbols plus
// 8 + max(ceil((8PL - 4SF + 28 + 16CRC - 20IH) / (4(SF - 2DE))) * (CR + 4), 0)
// payload symbols, each lasting 2^SF / BW seconds.
Duration time_on_air(const RadioConfig& config, std::size_t payload_len);
double time_on_air_seconds(const RadioConfig& config, std::size_t payload_len);

// SplitMix-seeded mt19937_64 with a hand-rolled uniform mapping, so draws are
// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next() { return engine_(); }
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  bool bernoulli(double p) { return uniform01() < p; }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform01() * static_cast<double>(n)); }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id);

// Well-known stream ids so that channel fades, link-quality reports and
// request schedules never share draws.
inline constexpr std::uint64_t kFadeStream = 1;
inline constexpr std::uint64_t kLinkQualityStream = 2;
inline constexpr std::uint64_t kScheduleStreamBase = 1000;

struct ChannelModel {
  double base_rssi_dbm = -68.0;
  double rssi_spread_dbm = 28.0;
  // Demodulation SNR floor for SF7..SF12.
  std::array<double, 6> snr_floor_db{-7.5, -10.0, -12.5, -15.0, -17.5, -20.0};
  double random_drop_probability = 0.0;
  // When false, only DATA frames are subject to the random drop.
  bool drop_control_frames = true;
  std::uint64_t seed = 1;

  void validate() const;
  bool drop_applies(framing::FrameKind kind) const {
    return drop_control_frames || kind == framing::FrameKind::data;
  }
};

struct LinkQuality {
  double rssi_dbm = 0.0;
  double snr_db = 0.0;
  double margin_db = 0.0;
};

LinkQuality sample_link_quality(const ChannelModel& model, const RadioConfig& radio, Rng& rng);

enum class ChannelOutcome { delivered, lost_collision, lost_fade };
std::string_view outcome_name(ChannelOutcome outcome);

struct Transmission {
  framing::Frame frame;
  SimTime start{};
  Duration toa{};
  SimTime end() const { return start + toa; }
};

// Overlapping airtime loses both frames; everything else is independently
// faded with random_drop_probability. Fade draws are taken in order of end
// time (ties by sender id, then input order), the same order the network
// engine resolves frames in.
std::vector<ChannelOutcome> resolve_channel(std::span<const Transmission> transmissions,
                                            const ChannelModel& model, Rng& fade_rng);
std::vector<ChannelOutcome> resolve_channel(std::span<const Transmission> transmissions,
                                            const ChannelModel& model);

// Per-node duty-cycle accounting. A start is admitted when
//  * the off-time of the previous frame, toa * (1/dc - 1), has elapsed, and
//  * airtime inside the rolling window ending with the new frame stays within
//    duty_cycle * window.
class AirtimeBudget {
 public:
  AirtimeBudget(NodeId node, Duration window, double duty_cycle);

  NodeId node() const { return node_; }
  Duration window() const { return window_; }
  double duty_cycle() const { return duty_cycle_; }
  Duration allowance() const { return allowance_; }

  // Earliest start >= now satisfying both rules. Throws ConfigError when a
  // single frame of this airtime can never fit the window.
  SimTime earliest_start(SimTime now, Duration toa) const;
  void record(SimTime start, Duration toa);

  // Airtime inside (window_end - window, window_end].
  Duration used_in_window(SimTime window_end) const;
  const std::deque<std::pair<SimTime, SimTime>>& history() const { return history_; }

 private:
  NodeId node_;
  Duration window_;
  double duty_cycle_;
  Duration allowance_;
  std::deque<std::pair<SimTime, SimTime>> history_;
  SimTime last_end_{};
  Duration last_toa_{};
};

SimTime admit_transmission(const AirtimeBudget& budget, SimTime now, Duration toa, double duty_cycle);

// Silent period a node owes after a frame of the given airtime.
Duration off_time(Duration toa, double duty_cycle);

}  // namespace loraweb::radio
