#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "loraweb/types.hpp"

namespace loraweb {

// One line of the event log. Text form (tab separated):
//   time_ns  node  event  frame  outcome  fields
// where `frame` and `outcome` are "-" when not applicable and `fields` is a
// space separated list of key=value pairs.
struct LogRecord {
  SimTime time{};
  NodeId node = 0;
  std::string event;
  std::string frame = "-";
  std::string outcome = "-";
  std::string fields;

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

class EventLog {
 public:
  void append(LogRecord record);
  void append(SimTime time, NodeId node, std::string event, std::string frame = "-",
              std::string outcome = "-", std::string fields = {});

  const std::vector<LogRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  void write(std::ostream& os) const;
  std::string to_text() const;
  static EventLog parse(std::istream& is);
  static EventLog from_text(const std::string& text);

 private:
  std::vector<LogRecord> records_;
};

// Value of `key` in a key=value field list.
std::optional<std::string> field_value(std::string_view fields, std::string_view key);

}  // namespace loraweb
