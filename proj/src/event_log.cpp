#include "loraweb/event_log.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

namespace loraweb {

void EventLog::append(LogRecord record) { records_.push_back(std::move(record)); }

void EventLog::append(SimTime time, NodeId node, std::string event, std::string frame, std::string outcome,
                      std::string fields) {
  records_.push_back(LogRecord{time, node, std::move(event), std::move(frame), std::move(outcome),
                               std::move(fields)});
}

void EventLog::write(std::ostream& os) const {
  for (const auto& r : records_) {
    os << r.time.count() << '\t' << static_cast<unsigned>(r.node) << '\t' << r.event << '\t' << r.frame << '\t'
       << r.outcome << '\t' << (r.fields.empty() ? "-" : r.fields) << '\n';
  }
}

std::string EventLog::to_text() const {
  std::ostringstream os;
  write(os);
  return os.str();
}

namespace {

template <typename T>
T parse_number(std::string_view text, std::size_t line_no) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw DecodeError("event log line " + std::to_string(line_no) + ": bad number '" + std::string(text) + "'");
  return value;
}

}  // namespace

EventLog EventLog::parse(std::istream& is) {
  EventLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> parts;
    std::string_view rest = line;
    for (int i = 0; i < 5; ++i) {
      const auto tab = rest.find('\t');
      if (tab == std::string_view::npos)
        throw DecodeError("event log line " + std::to_string(line_no) + ": expected 6 tab-separated columns");
      parts.push_back(rest.substr(0, tab));
      rest.remove_prefix(tab + 1);
    }
    parts.push_back(rest);
    LogRecord r;
    r.time = SimTime(parse_number<std::int64_t>(parts[0], line_no));
    const auto node = parse_number<unsigned>(parts[1], line_no);
    if (node > 255) throw DecodeError("event log line " + std::to_string(line_no) + ": node id out of range");
    r.node = static_cast<NodeId>(node);
    r.event = std::string(parts[2]);
    r.frame = std::string(parts[3]);
    r.outcome = std::string(parts[4]);
    r.fields = parts[5] == "-" ? std::string() : std::string(parts[5]);
    log.append(std::move(r));
  }
  return log;
}

EventLog EventLog::from_text(const std::string& text) {
  std::istringstream is(text);
  return parse(is);
}

std::optional<std::string> field_value(std::string_view fields, std::string_view key) {
  std::size_t pos = 0;
  while (pos < fields.size()) {
    std::size_t stop = fields.find(' ', pos);
    if (stop == std::string_view::npos) stop = fields.size();
    const std::string_view item = fields.substr(pos, stop - pos);
    const auto eq = item.find('=');
    if (eq != std::string_view::npos && item.substr(0, eq) == key) return std::string(item.substr(eq + 1));
    pos = stop + 1;
  }
  return std::nullopt;
}

}  // namespace loraweb
