#include "loraweb/radio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace loraweb::radio {

void RadioConfig::validate() const {
  if (spreading_factor < 7 || spreading_factor > 12)
    throw ConfigError("spreading_factor out of range: " + std::to_string(spreading_factor) +
                      " (expected 7..12)");
  if (bandwidth_hz != 125000 && bandwidth_hz != 250000 && bandwidth_hz != 500000)
    throw ConfigError("bandwidth_hz out of range: " + std::to_string(bandwidth_hz) +
                      " (expected 125000, 250000 or 500000)");
  if (coding_rate_denominator < 5 || coding_rate_denominator > 8)
    throw ConfigError("coding_rate out of range: " + std::to_string(coding_rate_denominator) +
                      " (expected 5..8)");
  if (preamble_symbols < 1) throw ConfigError("preamble_symbols must be positive");
  if (!(duty_cycle > 0.0 && duty_cycle <= 1.0))
    throw ConfigError("duty_cycle out of range: " + std::to_string(duty_cycle) + " (expected (0, 1])");
}

Duration time_on_air(const RadioConfig& config, std::size_t payload_len) {
  config.validate();
  if (payload_len > kMaxPhyPayload)
    throw ValidationError("payload of " + std::to_string(payload_len) + " bytes exceeds the " +
                          std::to_string(kMaxPhyPayload) + "-byte radio buffer");
  const long sf = config.spreading_factor;
  const long de = config.low_data_rate_optimize ? 1 : 0;
  const long ih = config.explicit_header ? 0 : 1;
  const long crc = config.crc_on ? 1 : 0;
  const long numerator = 8 * static_cast<long>(payload_len) - 4 * sf + 28 + 16 * crc - 20 * ih;
  const long denominator = 4 * (sf - 2 * de);
  const long blocks = numerator > 0 ? (numerator + denominator - 1) / denominator : 0;
  const long payload_symbols = 8 + blocks * config.coding_rate_denominator;

  // Total symbols counted in quarters: 4 * (preamble + 4.25 + payload).
  const long quarter_symbols = 4L * config.preamble_symbols + 17 + 4 * payload_symbols;
  // 2^SF / BW seconds per symbol; 1e9 / (4 * BW) is integral for all bandwidths.
  const long ns_per_quarter_at_sf0 = 1'000'000'000L / (4L * config.bandwidth_hz);
  return Duration(quarter_symbols * (1L << sf) * ns_per_quarter_at_sf0);
}

double time_on_air_seconds(const RadioConfig& config, std::size_t payload_len) {
  return to_seconds(time_on_air(config, payload_len));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id) {
  // splitmix64 over the combined key
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng Rng::stream(std::uint64_t seed, std::uint64_t stream_id) { return Rng(derive_seed(seed, stream_id)); }

void ChannelModel::validate() const {
  if (!(random_drop_probability >= 0.0 && random_drop_probability <= 1.0))
    throw ConfigError("random_drop_probability out of range: " + std::to_string(random_drop_probability) +
                      " (expected [0, 1])");
  if (rssi_spread_dbm < 0.0) throw ConfigError("rssi_spread_dbm must be non-negative");
}

LinkQuality sample_link_quality(const ChannelModel& model, const RadioConfig& radio, Rng& rng) {
  LinkQuality q;
  q.rssi_dbm = model.base_rssi_dbm + model.rssi_spread_dbm * (2.0 * rng.uniform01() - 1.0);
  const double noise_floor = -174.0 + 10.0 * std::log10(static_cast<double>(radio.bandwidth_hz)) + 6.0;
  q.snr_db = q.rssi_dbm - noise_floor;
  q.margin_db = q.snr_db - model.snr_floor_db[static_cast<std::size_t>(radio.spreading_factor - 7)];
  return q;
}

std::string_view outcome_name(ChannelOutcome outcome) {
  switch (outcome) {
    case ChannelOutcome::delivered: return "delivered";
    case ChannelOutcome::lost_collision: return "lost_collision";
    case ChannelOutcome::lost_fade: return "lost_fade";
  }
  return "unknown";
}

std::vector<ChannelOutcome> resolve_channel(std::span<const Transmission> txs, const ChannelModel& model,
                                            Rng& fade_rng) {
  model.validate();
  const std::size_t n = txs.size();
  std::vector<ChannelOutcome> out(n, ChannelOutcome::delivered);

  std::vector<std::size_t> by_start(n);
  std::iota(by_start.begin(), by_start.end(), 0);
  std::stable_sort(by_start.begin(), by_start.end(),
                   [&](std::size_t a, std::size_t b) { return txs[a].start < txs[b].start; });
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = txs[by_start[i]];
    for (std::size_t j = i + 1; j < n && txs[by_start[j]].start < a.end(); ++j) {
      out[by_start[i]] = ChannelOutcome::lost_collision;
      out[by_start[j]] = ChannelOutcome::lost_collision;
    }
  }

  std::vector<std::size_t> by_end(n);
  std::iota(by_end.begin(), by_end.end(), 0);
  std::stable_sort(by_end.begin(), by_end.end(), [&](std::size_t a, std::size_t b) {
    if (txs[a].end() != txs[b].end()) return txs[a].end() < txs[b].end();
    return txs[a].frame.src < txs[b].frame.src;
  });
  for (std::size_t idx : by_end) {
    if (out[idx] != ChannelOutcome::delivered) continue;
    if (!model.drop_applies(txs[idx].frame.kind)) continue;
    if (fade_rng.bernoulli(model.random_drop_probability)) out[idx] = ChannelOutcome::lost_fade;
  }
  return out;
}

std::vector<ChannelOutcome> resolve_channel(std::span<const Transmission> txs, const ChannelModel& model) {
  Rng rng = Rng::stream(model.seed, kFadeStream);
  return resolve_channel(txs, model, rng);
}

Duration off_time(Duration toa, double duty_cycle) {
  if (duty_cycle >= 1.0) return Duration::zero();
  return Duration(std::llround(static_cast<double>(toa.count()) * (1.0 / duty_cycle - 1.0)));
}

AirtimeBudget::AirtimeBudget(NodeId node, Duration window, double duty_cycle)
    : node_(node), window_(window), duty_cycle_(duty_cycle) {
  if (!(duty_cycle > 0.0 && duty_cycle <= 1.0))
    throw ConfigError("duty_cycle out of range: " + std::to_string(duty_cycle) + " (expected (0, 1])");
  if (window <= Duration::zero()) throw ConfigError("duty window must be positive");
  allowance_ = Duration(static_cast<Duration::rep>(
      std::floor(static_cast<long double>(window.count()) * duty_cycle + 1e-6L)));
}

Duration AirtimeBudget::used_in_window(SimTime window_end) const {
  const SimTime lo = window_end - window_;
  Duration used{};
  for (const auto& [s, e] : history_) {
    const SimTime a = std::max(s, lo);
    const SimTime b = std::min(e, window_end);
    if (b > a) used += b - a;
  }
  return used;
}

SimTime AirtimeBudget::earliest_start(SimTime now, Duration toa) const {
  if (duty_cycle_ >= 1.0) return now;
  if (toa > allowance_)
    throw ConfigError("duty cycle unsatisfiable: duty_cycle x duty window allows " +
                      std::to_string(to_millis(allowance_)) + " ms of airtime, one frame needs " +
                      std::to_string(to_millis(toa)) + " ms");

  SimTime t = now;
  if (last_toa_ > Duration::zero()) t = std::max(t, last_end_ + off_time(last_toa_, duty_cycle_));

  // Rolling window: airtime after x = t + toa - window must not exceed the
  // remaining allowance. Usage is non-increasing in x, so solve for x.
  const Duration remaining = allowance_ - toa;
  const SimTime x0 = t + toa - window_;
  std::vector<std::pair<SimTime, SimTime>> live;
  for (const auto& [s, e] : history_)
    if (e > x0) live.emplace_back(std::max(s, x0), e);
  Duration total{};
  for (const auto& [s, e] : live) total += e - s;
  if (total <= remaining) return t;

  std::vector<Duration> suffix(live.size() + 1, Duration::zero());
  for (std::size_t k = live.size(); k-- > 0;) suffix[k] = suffix[k + 1] + (live[k].second - live[k].first);
  for (std::size_t k = 0; k < live.size(); ++k) {
    if (suffix[k + 1] <= remaining) {
      const SimTime x = live[k].second - (remaining - suffix[k + 1]);
      return std::max(t, x + window_ - toa);
    }
  }
  return t;  // unreachable: suffix past the last interval is zero
}

void AirtimeBudget::record(SimTime start, Duration toa) {
  history_.emplace_back(start, start + toa);
  last_end_ = start + toa;
  last_toa_ = toa;
  while (!history_.empty() && history_.front().second <= start - window_) history_.pop_front();
}

SimTime admit_transmission(const AirtimeBudget& budget, SimTime now, Duration toa, double duty_cycle) {
  if (duty_cycle == budget.duty_cycle()) return budget.earliest_start(now, toa);
  AirtimeBudget scaled(budget.node(), budget.window(), duty_cycle);
  for (const auto& [s, e] : budget.history()) scaled.record(s, e - s);
  return scaled.earliest_start(now, toa);
}

}  // namespace loraweb::radio
