#pragma once

#include <optional>
#include <string>
#include <vector>

#include "loraweb/simulator.hpp"

namespace loraweb::sim {

struct RadioPoint {
  int spreading_factor = 7;
  std::uint32_t bandwidth_hz = 125000;
};

// Per-point knobs that tune a desk-scale run toward measured PDR values.
// Entries without a duty cycle apply to every duty cycle of their SF/BW.
struct CalibrationEntry {
  RadioPoint point;
  std::optional<double> duty_cycle;
  std::optional<double> random_drop_probability;
  std::optional<int> max_retry;
  std::optional<double> duty_window_s;
  std::optional<double> first_response_timeout_s;
};

struct SweepSpec {
  ScenarioSpec base;
  std::vector<RadioPoint> configs;
  std::vector<double> duty_cycles;
  std::vector<CalibrationEntry> calibration;
  std::string output_dir;

  void validate() const;
  ScenarioSpec scenario_for(const RadioPoint& point, double duty_cycle) const;
};

struct SweepRow {
  std::string config_id;
  int spreading_factor = 0;
  std::uint32_t bandwidth_hz = 0;
  double duty_cycle = 0.0;
  MetricsReport metrics;

  bool operator==(const SweepRow&) const = default;
};

std::string config_id(const RadioPoint& point, double duty_cycle);

// Grid order: configs outer, duty cycles inner. Both variants return rows in
// that order; the parallel one runs grid points on OpenMP threads.
std::vector<SweepRow> run_sweep_serial(const SweepSpec& spec);
std::vector<SweepRow> run_sweep_parallel(const SweepSpec& spec);

struct JfiSummary {
  std::vector<RadioPoint> configs;
  std::vector<double> throughputs;  // mean over duty cycles, or the override
  double jfi = 1.0;
};

// JFI across SF/BW configurations. `override_values`, when given, replaces the
// measured per-config throughputs (one value per config, in config order).
JfiSummary sweep_jfi(const std::vector<SweepRow>& rows, const std::optional<std::vector<double>>& override_values = {});

// Fixed column order: config_id,sf,bw_hz,duty,requests_sent,requests_ok,
// pdr_pct,throughput_Bps,data_rate_Bps,mean_response_ms,mean_access_ms,
// collisions,retransmissions,cache_hits
std::string metrics_csv_header();
std::string metrics_csv_row(const SweepRow& row);
std::string metrics_csv(const std::vector<SweepRow>& rows);
std::string jfi_csv(const JfiSummary& summary);
// Whitespace-separated blocks, one per SF/BW config, for gnuplot's `index`.
std::string gnuplot_data(const std::vector<SweepRow>& rows);
// key: value listing of every MetricsReport field.
std::string metrics_text(const MetricsReport& m);

SweepRow row_for(const ScenarioSpec& spec, const MetricsReport& m);

}  // namespace loraweb::sim
