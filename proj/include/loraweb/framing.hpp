#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loraweb/types.hpp"

namespace loraweb::framing {

inline constexpr std::size_t kMaxPayload = 250;
inline constexpr std::size_t kHeaderSize = 6;
inline constexpr std::size_t kMaxFrameSize = kHeaderSize + kMaxPayload;
inline constexpr std::string_view kTerminalKeyword = "</html>";

enum class FrameKind : std::uint8_t {
  request = 1,
  data = 2,
  ack = 3,
  version_query = 4,
  version_reply = 5,
  ping_request = 6,
  ping_reply = 7,
};

std::string_view kind_name(FrameKind kind);
std::optional<FrameKind> kind_from_name(std::string_view name);

struct Frame {
  NodeId src = 0;
  NodeId dst = 0;
  FrameKind kind = FrameKind::data;
  std::uint16_t chunk_id = 0;
  Bytes payload;

  std::size_t wire_size() const { return kHeaderSize + payload.size(); }
  friend bool operator==(const Frame&, const Frame&) = default;
};

// Wire layout: src, dst, kind, chunk_id (big-endian u16), payload_len (u8), payload.
Bytes encode_frame(const Frame& frame);
Frame decode_frame(std::span<const std::uint8_t> bytes);

// One-line summary used in event logs, e.g. "DATA 0>1 #3 len=250".
std::string describe(const Frame& frame);

// True when the chunk ends with the terminal keyword, ignoring trailing
// ASCII whitespace.
bool is_terminal(std::span<const std::uint8_t> chunk);
bool is_terminal(std::string_view chunk);

// Splits a body into chunks of at most kMaxPayload bytes. The final boundary
// is moved left when it would cut the terminal keyword (and its trailing
// whitespace), and a non-final chunk is never allowed to look terminal.
std::vector<Bytes> slice_payload(std::span<const std::uint8_t> body);

// Reassembly buffer for one transfer. Chunk ids are 1-based.
class ChunkSet {
 public:
  // Returns false for a duplicate id carrying identical bytes; throws
  // IntegrityError for a duplicate id with different bytes.
  bool add(std::uint16_t chunk_id, Bytes payload);

  bool contains(std::uint16_t chunk_id) const { return chunks_.count(chunk_id) != 0; }
  bool terminal_seen() const { return terminal_id_.has_value(); }
  std::size_t size() const { return chunks_.size(); }
  std::size_t byte_count() const;
  void clear();

  const std::map<std::uint16_t, Bytes>& chunks() const { return chunks_; }

 private:
  std::map<std::uint16_t, Bytes> chunks_;
  std::optional<std::uint16_t> terminal_id_;
};

// Concatenates chunks 1..n. Throws IntegrityError on gaps or a terminal chunk
// that is not the last id, IncompleteTransferError when no terminal arrived.
Bytes reassemble(const ChunkSet& chunks);

}  // namespace loraweb::framing
