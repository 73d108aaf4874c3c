#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace loraweb {

using NodeId = std::uint8_t;
using Bytes = std::vector<std::uint8_t>;

// Simulated time is integral nanoseconds since the start of a run. LoRa symbol
// times are whole nanoseconds for every supported SF/BW pair, so airtime sums
// stay exact.
using Duration = std::chrono::nanoseconds;
using SimTime = std::chrono::nanoseconds;

inline double to_seconds(Duration d) { return std::chrono::duration<double>(d).count(); }
inline double to_millis(Duration d) { return std::chrono::duration<double, std::milli>(d).count(); }

inline Duration from_seconds(double s) {
  return std::chrono::duration_cast<Duration>(std::chrono::duration<double>(s));
}
inline Duration from_millis(double ms) {
  return std::chrono::duration_cast<Duration>(std::chrono::duration<double, std::milli>(ms));
}

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
inline std::string to_string(const Bytes& b) { return std::string(b.begin(), b.end()); }

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid radio, channel or scenario configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

// Reassembly found a gap, a conflicting duplicate, or a misplaced terminal.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class IncompleteTransferError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace loraweb
