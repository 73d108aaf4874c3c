#pragma once

#include <random>
#include <string>
#include <vector>

#include "loraweb/network.hpp"
#include "loraweb/transfer.hpp"

namespace testutil {

using namespace loraweb;

inline Bytes html_page(std::size_t size, std::uint64_t seed = 1) {
  const std::string_view kw = framing::kTerminalKeyword;
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> letter('a', 'z');
  Bytes body;
  const std::string head = "<html><body>";
  body.insert(body.end(), head.begin(), head.end());
  while (body.size() + kw.size() < size) body.push_back(static_cast<std::uint8_t>(letter(gen)));
  body.insert(body.end(), kw.begin(), kw.end());
  body.resize(std::max(size, body.size()));
  return body;
}

inline transfer::PageLookup single_page(std::string name, Bytes body, std::uint32_t version = 1) {
  return [name = std::move(name), body = std::move(body), version](const std::string& url)
             -> std::optional<transfer::WebPage> {
    if (url != name) return std::nullopt;
    return transfer::WebPage{name, version, body};
  };
}

inline radio::RadioConfig radio_config(int sf, std::uint32_t bw, double duty = 1.0) {
  radio::RadioConfig c;
  c.spreading_factor = sf;
  c.bandwidth_hz = bw;
  c.duty_cycle = duty;
  return c;
}

struct FrameEnd {
  SimTime time;
  NodeId node;
  std::string frame;
  std::string outcome;
  std::string rx;
};

inline std::vector<FrameEnd> frame_ends(const EventLog& log) {
  std::vector<FrameEnd> out;
  for (const auto& r : log.records())
    if (r.event == "tx_end")
      out.push_back({r.time, r.node, r.frame, r.outcome, field_value(r.fields, "rx").value_or("")});
  return out;
}

inline std::size_t count_frames(const EventLog& log, std::string_view kind) {
  std::size_t n = 0;
  for (const auto& r : log.records())
    if (r.event == "tx_start" && r.frame.rfind(kind, 0) == 0 && r.frame[kind.size()] == ' ') ++n;
  return n;
}

}  // namespace testutil
