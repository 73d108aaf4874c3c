#pragma once

#include <optional>
#include <string>
#include <vector>

#include "loraweb/event_log.hpp"
#include "loraweb/network.hpp"
#include "loraweb/nodes.hpp"

namespace loraweb::sim {

struct PageSpec {
  std::string name;
  std::size_t size = 1500;      // generated body length, ignored when body is set
  std::optional<std::string> body;
  std::uint32_t versions = 1;   // number of uploads before the run
};

// Request arrivals for one client: explicit offsets from t = 0, or a uniform
// random gap in [min, max] seconds between consecutive arrivals.
struct ScheduleSpec {
  std::vector<double> at_s;
  double min_gap_s = 8.0;
  double max_gap_s = 25.0;
  bool explicit_times() const { return !at_s.empty(); }
};

struct ClientSpec {
  NodeId id = 1;
  ScheduleSpec schedule;
  std::vector<std::string> pages;  // empty: every scenario page
  bool cache_enabled = true;
  std::size_t queue_limit = 32;
};

struct ArqOverrides {
  std::optional<int> max_retry;
  std::optional<double> ack_timeout_s;
  std::optional<double> receive_timeout_s;
  std::optional<double> first_response_timeout_s;
};

struct ScenarioSpec {
  std::string name = "scenario";
  radio::RadioConfig radio;
  radio::ChannelModel channel;
  radio::NetworkOptions network;
  ArqOverrides arq;
  NodeId server = 0;
  std::vector<ClientSpec> clients;
  std::vector<PageSpec> pages;
  NodeId monitor = 1;                      // client whose requests are measured
  std::optional<std::size_t> target_successes;
  double max_duration_s = 3600.0;
  std::uint64_t seed = 1;
  // Turn low data rate optimisation on when a symbol lasts 16 ms or more.
  bool auto_low_data_rate = false;

  // The radio config actually used, after the automatic LDRO rule.
  radio::RadioConfig effective_radio() const;
  // Throws ConfigError naming the offending field.
  void validate() const;
  transfer::ArqParams arq_params() const;
};

// Deterministic filler page of exactly `size` bytes ending in the terminal keyword.
Bytes make_page_body(std::size_t size, std::uint64_t seed);

struct MetricsReport {
  std::size_t requests_sent = 0;  // beta: page exchanges started by the monitored client
  std::size_t requests_ok = 0;    // alpha: of those, delivered (200)
  std::size_t requests_not_found = 0;
  std::size_t requests_failed = 0;
  double pdr_pct = 0.0;
  std::size_t frames_sent = 0;
  std::size_t frames_delivered = 0;
  double frame_pdr_pct = 0.0;
  // Busy time: REQUEST emission to result, summed over every exchange of the
  // monitored client, failed ones included.
  double throughput_Bps = 0.0;  // delivered bytes / busy time
  double data_rate_Bps = 0.0;   // delivered bytes / summed access delay of successful requests
  double mean_response_ms = 0.0;
  double max_response_ms = 0.0;
  double mean_access_ms = 0.0;
  double max_access_ms = 0.0;
  std::size_t collisions = 0;
  std::size_t retransmissions = 0;
  std::size_t cache_hits = 0;
  double sim_duration_s = 0.0;

  bool operator==(const MetricsReport&) const = default;
};

struct ChannelCounts {
  std::size_t frames_sent = 0;
  std::size_t frames_delivered = 0;
  std::size_t collisions = 0;
  std::size_t retransmissions = 0;
  std::size_t cache_served = 0;  // http requests answered from a fresh cache entry
};

MetricsReport aggregate_metrics(const std::vector<nodes::RequestReport>& requests, const ChannelCounts& counts,
                                SimTime end);

// Rebuilds per-request reports for one client from the log alone.
std::vector<nodes::RequestReport> request_reports(const EventLog& log, NodeId client);
MetricsReport metrics_from_log(const EventLog& log, NodeId monitor);

struct RunResult {
  EventLog log;
  MetricsReport metrics;          // computed online during the run
  std::vector<nodes::RequestReport> requests;
  bool target_reached = false;
};

RunResult run_scenario(const ScenarioSpec& spec);

// alpha / beta * 100. Throws ValidationError when beta is 0 or alpha > beta.
double compute_pdr(std::size_t delivered, std::size_t total);
// Jain's index (sum x)^2 / (N sum x^2). Throws ValidationError on an empty
// list or a non-positive value.
double compute_jfi(const std::vector<double>& throughputs);

// Response time: first DATA arrival minus REQUEST emission. Access delay:
// completion minus REQUEST emission. Absent for failed or unknown requests.
std::optional<Duration> measure_response_time(const EventLog& log, std::uint64_t request_id);
std::optional<Duration> measure_access_delay(const EventLog& log, std::uint64_t request_id);

// --- experiments ----------------------------------------------------------------

struct PacketLossResult {
  std::size_t sent = 0;
  std::size_t delivered = 0;
  double pdr_pct = 0.0;
  std::size_t retransmissions = 0;
  std::size_t data_frames = 0;
};

// Single-chunk page transfers over a DATA-fading channel, back to back.
PacketLossResult packet_loss_experiment(std::size_t transfers, std::uint64_t seed, double drop_probability,
                                        bool retransmit);

struct AccessDelayPoint {
  std::size_t page_bytes = 0;
  std::size_t chunks = 0;
  double access_ms = 0.0;
  double response_ms = 0.0;
};

// One lossless transfer per page size on an otherwise idle channel.
std::vector<AccessDelayPoint> access_delay_experiment(const radio::RadioConfig& radio,
                                                      const std::vector<std::size_t>& sizes);

}  // namespace loraweb::sim
