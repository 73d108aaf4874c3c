#include "loraweb/sweep.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>

namespace loraweb::sim {

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

bool same_duty(double a, double b) { return std::fabs(a - b) < 1e-9; }

}  // namespace

std::string config_id(const RadioPoint& p, double duty_cycle) {
  return "sf" + std::to_string(p.spreading_factor) + "-bw" + std::to_string(p.bandwidth_hz / 1000) + "-dc" +
         std::to_string(static_cast<int>(std::lround(duty_cycle * 100.0)));
}

void SweepSpec::validate() const {
  if (configs.empty()) throw ConfigError("sweep: no SF/BW configs");
  if (duty_cycles.empty()) throw ConfigError("sweep: no duty cycles");
  for (const auto& c : configs)
    for (double d : duty_cycles) scenario_for(c, d).validate();
  // An entry that matches no grid point is almost always a typo.
  for (const auto& e : calibration) {
    const bool hit = std::any_of(configs.begin(), configs.end(), [&](const RadioPoint& c) {
      return c.spreading_factor == e.point.spreading_factor && c.bandwidth_hz == e.point.bandwidth_hz;
    });
    const bool duty_hit = !e.duty_cycle || std::any_of(duty_cycles.begin(), duty_cycles.end(),
                                                       [&](double d) { return same_duty(d, *e.duty_cycle); });
    if (!hit || !duty_hit)
      throw ConfigError("calibration entry matches no grid point: sf " + std::to_string(e.point.spreading_factor) +
                        ", bw " + std::to_string(e.point.bandwidth_hz) +
                        (e.duty_cycle ? ", duty " + std::to_string(*e.duty_cycle) : std::string()));
  }
}

ScenarioSpec SweepSpec::scenario_for(const RadioPoint& point, double duty_cycle) const {
  ScenarioSpec s = base;
  s.radio.spreading_factor = point.spreading_factor;
  s.radio.bandwidth_hz = point.bandwidth_hz;
  s.radio.duty_cycle = duty_cycle;
  s.name = config_id(point, duty_cycle);
  // Config-wide entries first, then duty-specific ones override them.
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& e : calibration) {
      if (e.point.spreading_factor != point.spreading_factor || e.point.bandwidth_hz != point.bandwidth_hz) continue;
      if ((pass == 0) != !e.duty_cycle.has_value()) continue;
      if (e.duty_cycle && !same_duty(*e.duty_cycle, duty_cycle)) continue;
      if (e.random_drop_probability) s.channel.random_drop_probability = *e.random_drop_probability;
      if (e.max_retry) s.arq.max_retry = *e.max_retry;
      if (e.duty_window_s)
        s.network.duty_window = Duration(static_cast<Duration::rep>(std::llround(*e.duty_window_s * 1e9)));
      if (e.first_response_timeout_s) s.arq.first_response_timeout_s = *e.first_response_timeout_s;
    }
  }
  return s;
}

SweepRow row_for(const ScenarioSpec& spec, const MetricsReport& m) {
  return SweepRow{spec.name, spec.radio.spreading_factor, spec.radio.bandwidth_hz, spec.radio.duty_cycle, m};
}

namespace {

std::vector<ScenarioSpec> grid(const SweepSpec& spec) {
  std::vector<ScenarioSpec> out;
  for (const auto& c : spec.configs)
    for (double d : spec.duty_cycles) out.push_back(spec.scenario_for(c, d));
  return out;
}

}  // namespace

std::vector<SweepRow> run_sweep_serial(const SweepSpec& spec) {
  std::vector<SweepRow> rows;
  for (const auto& s : grid(spec)) rows.push_back(row_for(s, run_scenario(s).metrics));
  return rows;
}

std::vector<SweepRow> run_sweep_parallel(const SweepSpec& spec) {
  const auto points = grid(spec);
  std::vector<SweepRow> rows(points.size());
  std::vector<std::exception_ptr> errors(points.size());
  const auto n = static_cast<long>(points.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    try {
      rows[i] = row_for(points[i], run_scenario(points[i]).metrics);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

JfiSummary sweep_jfi(const std::vector<SweepRow>& rows, const std::optional<std::vector<double>>& override_values) {
  JfiSummary out;
  std::vector<std::pair<double, int>> acc;
  for (const auto& r : rows) {
    std::size_t i = 0;
    while (i < out.configs.size() && (out.configs[i].spreading_factor != r.spreading_factor ||
                                      out.configs[i].bandwidth_hz != r.bandwidth_hz))
      ++i;
    if (i == out.configs.size()) {
      out.configs.push_back({r.spreading_factor, r.bandwidth_hz});
      acc.emplace_back(0.0, 0);
    }
    acc[i].first += r.metrics.throughput_Bps;
    ++acc[i].second;
  }
  if (override_values) {
    if (override_values->size() != out.configs.size())
      throw ValidationError("throughput override needs " + std::to_string(out.configs.size()) + " values, got " +
                            std::to_string(override_values->size()));
    out.throughputs = *override_values;
  } else {
    for (const auto& [sum, n] : acc) out.throughputs.push_back(sum / n);
  }
  out.jfi = compute_jfi(out.throughputs);
  return out;
}

std::string metrics_csv_header() {
  return "config_id,sf,bw_hz,duty,requests_sent,requests_ok,pdr_pct,throughput_Bps,data_rate_Bps,"
         "mean_response_ms,mean_access_ms,collisions,retransmissions,cache_hits";
}

std::string metrics_csv_row(const SweepRow& r) {
  const auto& m = r.metrics;
  std::ostringstream os;
  os << r.config_id << ',' << r.spreading_factor << ',' << r.bandwidth_hz << ',' << fixed(r.duty_cycle, 2) << ','
     << m.requests_sent << ',' << m.requests_ok << ',' << fixed(m.pdr_pct, 1) << ',' << fixed(m.throughput_Bps, 3)
     << ',' << fixed(m.data_rate_Bps, 3) << ',' << fixed(m.mean_response_ms, 3) << ','
     << fixed(m.mean_access_ms, 3) << ',' << m.collisions << ',' << m.retransmissions << ',' << m.cache_hits;
  return os.str();
}

std::string metrics_csv(const std::vector<SweepRow>& rows) {
  std::string out = metrics_csv_header() + "\n";
  for (const auto& r : rows) out += metrics_csv_row(r) + "\n";
  return out;
}

std::string jfi_csv(const JfiSummary& s) {
  std::string out = "sf,bw_hz,throughput_Bps,jfi\n";
  for (std::size_t i = 0; i < s.configs.size(); ++i)
    out += std::to_string(s.configs[i].spreading_factor) + "," + std::to_string(s.configs[i].bandwidth_hz) + "," +
           fixed(s.throughputs[i], 6) + "," + fixed(s.jfi, 6) + "\n";
  return out;
}

std::string gnuplot_data(const std::vector<SweepRow>& rows) {
  std::string out;
  int last_sf = -1;
  std::uint32_t last_bw = 0;
  for (const auto& r : rows) {
    if (r.spreading_factor != last_sf || r.bandwidth_hz != last_bw) {
      if (last_sf != -1) out += "\n\n";
      out += "# sf" + std::to_string(r.spreading_factor) + " bw" + std::to_string(r.bandwidth_hz) +
             "\n# duty_pct pdr_pct throughput_Bps data_rate_Bps mean_response_ms mean_access_ms collisions\n";
      last_sf = r.spreading_factor;
      last_bw = r.bandwidth_hz;
    }
    const auto& m = r.metrics;
    out += fixed(r.duty_cycle * 100.0, 0) + " " + fixed(m.pdr_pct, 1) + " " + fixed(m.throughput_Bps, 3) + " " +
           fixed(m.data_rate_Bps, 3) + " " + fixed(m.mean_response_ms, 3) + " " + fixed(m.mean_access_ms, 3) + " " +
           std::to_string(m.collisions) + "\n";
  }
  return out;
}

std::string metrics_text(const MetricsReport& m) {
  std::ostringstream os;
  os << "requests_sent: " << m.requests_sent << "\n"
     << "requests_ok: " << m.requests_ok << "\n"
     << "requests_not_found: " << m.requests_not_found << "\n"
     << "requests_failed: " << m.requests_failed << "\n"
     << "pdr_pct: " << fixed(m.pdr_pct, 1) << "\n"
     << "frames_sent: " << m.frames_sent << "\n"
     << "frames_delivered: " << m.frames_delivered << "\n"
     << "frame_pdr_pct: " << fixed(m.frame_pdr_pct, 1) << "\n"
     << "throughput_Bps: " << fixed(m.throughput_Bps, 3) << "\n"
     << "data_rate_Bps: " << fixed(m.data_rate_Bps, 3) << "\n"
     << "mean_response_ms: " << fixed(m.mean_response_ms, 3) << "\n"
     << "max_response_ms: " << fixed(m.max_response_ms, 3) << "\n"
     << "mean_access_ms: " << fixed(m.mean_access_ms, 3) << "\n"
     << "max_access_ms: " << fixed(m.max_access_ms, 3) << "\n"
     << "collisions: " << m.collisions << "\n"
     << "retransmissions: " << m.retransmissions << "\n"
     << "cache_hits: " << m.cache_hits << "\n"
     << "sim_duration_s: " << fixed(m.sim_duration_s, 3) << "\n";
  return os.str();
}

}  // namespace loraweb::sim
