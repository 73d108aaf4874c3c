#include "loraweb/framing.hpp"

#include <algorithm>
#include <array>
#include <sstream>

namespace loraweb::framing {

namespace {

constexpr std::array<std::pair<FrameKind, std::string_view>, 7> kKindNames{{
    {FrameKind::request, "REQUEST"},
    {FrameKind::data, "DATA"},
    {FrameKind::ack, "ACK"},
    {FrameKind::version_query, "VERSION_QUERY"},
    {FrameKind::version_reply, "VERSION_REPLY"},
    {FrameKind::ping_request, "PING_REQ"},
    {FrameKind::ping_reply, "PING_REPLY"},
}};

bool is_ascii_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

// Length of the keyword plus trailing whitespace when the body ends in the
// terminal keyword, 0 otherwise.
std::size_t protected_tail(std::span<const std::uint8_t> body) {
  std::size_t end = body.size();
  while (end > 0 && is_ascii_space(body[end - 1])) --end;
  if (end < kTerminalKeyword.size()) return 0;
  auto kw = body.subspan(end - kTerminalKeyword.size(), kTerminalKeyword.size());
  if (!std::equal(kw.begin(), kw.end(), kTerminalKeyword.begin())) return 0;
  // A tail longer than one chunk cannot be kept together; the slicer then
  // falls back to plain 250-byte boundaries.
  std::size_t tail = body.size() - end + kTerminalKeyword.size();
  return tail <= kMaxPayload ? tail : 0;
}

}  // namespace

std::string_view kind_name(FrameKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "UNKNOWN";
}

std::optional<FrameKind> kind_from_name(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  return std::nullopt;
}

Bytes encode_frame(const Frame& frame) {
  if (frame.payload.size() > kMaxPayload)
    throw ValidationError("frame payload of " + std::to_string(frame.payload.size()) +
                          " bytes exceeds " + std::to_string(kMaxPayload));
  Bytes out;
  out.reserve(frame.wire_size());
  out.push_back(frame.src);
  out.push_back(frame.dst);
  out.push_back(static_cast<std::uint8_t>(frame.kind));
  out.push_back(static_cast<std::uint8_t>(frame.chunk_id >> 8));
  out.push_back(static_cast<std::uint8_t>(frame.chunk_id & 0xff));
  out.push_back(static_cast<std::uint8_t>(frame.payload.size()));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize)
    throw DecodeError("truncated frame: " + std::to_string(bytes.size()) + " bytes");
  const std::uint8_t kind = bytes[2];
  if (kind < static_cast<std::uint8_t>(FrameKind::request) ||
      kind > static_cast<std::uint8_t>(FrameKind::ping_reply))
    throw DecodeError("unknown frame kind " + std::to_string(kind));
  const std::size_t len = bytes[5];
  if (len > kMaxPayload) throw DecodeError("payload length " + std::to_string(len) + " over limit");
  if (bytes.size() - kHeaderSize != len)
    throw DecodeError("payload length mismatch: header says " + std::to_string(len) + ", got " +
                      std::to_string(bytes.size() - kHeaderSize));
  Frame f;
  f.src = bytes[0];
  f.dst = bytes[1];
  f.kind = static_cast<FrameKind>(kind);
  f.chunk_id = static_cast<std::uint16_t>((bytes[3] << 8) | bytes[4]);
  f.payload.assign(bytes.begin() + kHeaderSize, bytes.end());
  return f;
}

std::string describe(const Frame& frame) {
  std::ostringstream os;
  os << kind_name(frame.kind) << ' ' << int(frame.src) << '>' << int(frame.dst) << " #"
     << frame.chunk_id << " len=" << frame.payload.size();
  return os.str();
}

bool is_terminal(std::span<const std::uint8_t> chunk) {
  std::size_t end = chunk.size();
  while (end > 0 && is_ascii_space(chunk[end - 1])) --end;
  if (end < kTerminalKeyword.size()) return false;
  return std::equal(kTerminalKeyword.begin(), kTerminalKeyword.end(),
                    chunk.begin() + static_cast<std::ptrdiff_t>(end - kTerminalKeyword.size()));
}

bool is_terminal(std::string_view chunk) {
  return is_terminal(std::span(reinterpret_cast<const std::uint8_t*>(chunk.data()), chunk.size()));
}

std::vector<Bytes> slice_payload(std::span<const std::uint8_t> body) {
  if (body.empty()) throw ValidationError("empty payload: a page needs at least the terminal keyword");
  const std::size_t tail = protected_tail(body);

  std::vector<Bytes> chunks;
  chunks.reserve(body.size() / kMaxPayload + 1);
  std::size_t pos = 0;
  while (body.size() - pos > kMaxPayload) {
    const std::size_t rest = body.size() - pos;
    std::size_t take = kMaxPayload;
    if (tail != 0 && rest - take < tail) take = rest - tail;
    while (take > 1 && is_terminal(body.subspan(pos, take))) --take;
    chunks.emplace_back(body.begin() + pos, body.begin() + pos + take);
    pos += take;
  }
  chunks.emplace_back(body.begin() + pos, body.end());
  return chunks;
}

bool ChunkSet::add(std::uint16_t chunk_id, Bytes payload) {
  if (chunk_id == 0) throw IntegrityError("chunk id 0 is reserved");
  if (auto it = chunks_.find(chunk_id); it != chunks_.end()) {
    if (it->second != payload)
      throw IntegrityError("chunk " + std::to_string(chunk_id) + " received twice with different bytes");
    return false;
  }
  if (is_terminal(payload)) {
    if (terminal_id_ && *terminal_id_ != chunk_id)
      throw IntegrityError("second terminal chunk " + std::to_string(chunk_id));
    terminal_id_ = chunk_id;
  }
  chunks_.emplace(chunk_id, std::move(payload));
  return true;
}

std::size_t ChunkSet::byte_count() const {
  std::size_t n = 0;
  for (const auto& [id, p] : chunks_) n += p.size();
  return n;
}

void ChunkSet::clear() {
  chunks_.clear();
  terminal_id_.reset();
}

Bytes reassemble(const ChunkSet& set) {
  std::uint16_t expected = 1;
  for (const auto& [id, payload] : set.chunks()) {
    if (id != expected)
      throw IntegrityError("chunk gap: expected id " + std::to_string(expected) + ", found " +
                           std::to_string(id));
    ++expected;
  }
  if (!set.terminal_seen()) throw IncompleteTransferError("terminal chunk not received");
  if (set.chunks().rbegin()->first != expected - 1 ||
      !is_terminal(set.chunks().rbegin()->second))
    throw IntegrityError("terminal chunk is not the last chunk");
  Bytes out;
  out.reserve(set.byte_count());
  for (const auto& [id, payload] : set.chunks()) out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

}  // namespace loraweb::framing
