#include <random>
#include <string>

#include "doctest.h"
#include "loraweb/framing.hpp"

using namespace loraweb;
using namespace loraweb::framing;

namespace {

Bytes random_body(std::mt19937_64& gen, std::size_t n) {
  std::uniform_int_distribution<int> byte(0, 255);
  Bytes b(n);
  for (auto& c : b) c = static_cast<std::uint8_t>(byte(gen));
  return b;
}

Bytes filler(std::size_t n, char c = 'a') { return Bytes(n, static_cast<std::uint8_t>(c)); }

ChunkSet to_set(const std::vector<Bytes>& chunks) {
  ChunkSet set;
  for (std::size_t i = 0; i < chunks.size(); ++i) set.add(static_cast<std::uint16_t>(i + 1), chunks[i]);
  return set;
}

}  // namespace

TEST_CASE("frame header layout") {
  Frame f{1, 2, FrameKind::ack, 7, {}};
  const Bytes wire = encode_frame(f);
  CHECK(wire == Bytes{1, 2, 3, 0, 7, 0});
  CHECK(decode_frame(wire) == f);

  Frame big{9, 4, FrameKind::data, 0x1234, to_bytes("xyz")};
  CHECK(encode_frame(big) == Bytes{9, 4, 2, 0x12, 0x34, 3, 'x', 'y', 'z'});
}

TEST_CASE("decode rejects malformed input") {
  CHECK_THROWS_AS(decode_frame(Bytes{1, 2, 3}), DecodeError);
  CHECK_THROWS_AS(decode_frame(Bytes{1, 2, 0, 0, 1, 0}), DecodeError);
  CHECK_THROWS_AS(decode_frame(Bytes{1, 2, 8, 0, 1, 0}), DecodeError);
  CHECK_THROWS_AS(decode_frame(Bytes{1, 2, 2, 0, 1, 2, 'a'}), DecodeError);
  CHECK_THROWS_AS(encode_frame(Frame{1, 2, FrameKind::data, 1, filler(251)}), ValidationError);
}

TEST_CASE("random frames round-trip through the wire format") {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> u8(0, 255), kind(1, 7), len(0, 250);
  std::uniform_int_distribution<int> u16(0, 65535);
  for (int i = 0; i < 10000; ++i) {
    Frame f;
    f.src = static_cast<NodeId>(u8(gen));
    f.dst = static_cast<NodeId>(u8(gen));
    f.kind = static_cast<FrameKind>(kind(gen));
    f.chunk_id = static_cast<std::uint16_t>(u16(gen));
    f.payload = random_body(gen, static_cast<std::size_t>(len(gen)));
    const Bytes wire = encode_frame(f);
    REQUIRE(wire.size() == kHeaderSize + f.payload.size());
    REQUIRE(decode_frame(wire) == f);
  }
}

TEST_CASE("slicing boundaries") {
  CHECK(slice_payload(filler(250)).size() == 1);
  auto two = slice_payload(filler(251));
  REQUIRE(two.size() == 2);
  CHECK(two[0].size() == 250);
  CHECK(two[1].size() == 1);
  CHECK(slice_payload(filler(1500)).size() == 6);
  CHECK(slice_payload(filler(10000)).size() == 40);
  CHECK_THROWS_AS(slice_payload(Bytes{}), ValidationError);
}

TEST_CASE("chunk count matches ceil(n/250) for every length up to 20000") {
  Bytes body = filler(20000);
  Bytes page = filler(20000);
  const std::string kw(kTerminalKeyword);
  for (std::size_t n = 1; n <= 20000; ++n) {
    const std::size_t expected = (n + 249) / 250;
    const auto plain = slice_payload(std::span(body.data(), n));
    REQUIRE(plain.size() == expected);
    std::size_t total = 0;
    for (std::size_t i = 0; i < plain.size(); ++i) {
      REQUIRE(plain[i].size() <= kMaxPayload);
      if (i + 1 < plain.size()) REQUIRE(plain[i].size() == kMaxPayload);
      total += plain[i].size();
    }
    REQUIRE(total == n);

    if (n >= kw.size()) {
      std::copy(kw.begin(), kw.end(), page.begin() + static_cast<std::ptrdiff_t>(n - kw.size()));
      const auto html = slice_payload(std::span(page.data(), n));
      REQUIRE(html.size() == expected);
      REQUIRE(is_terminal(html.back()));
      for (std::size_t i = 0; i + 1 < html.size(); ++i) REQUIRE_FALSE(is_terminal(html[i]));
      std::fill(page.begin() + static_cast<std::ptrdiff_t>(n - kw.size()),
                page.begin() + static_cast<std::ptrdiff_t>(n), 'a');
    }
  }
}

TEST_CASE("keyword straddling the 250-byte boundary lands intact in the last chunk") {
  for (std::size_t extra = 1; extra < kTerminalKeyword.size(); ++extra) {
    Bytes body = filler(250 + extra);
    std::copy(kTerminalKeyword.begin(), kTerminalKeyword.end(), body.end() - 7);
    auto chunks = slice_payload(body);
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[1].size() == kTerminalKeyword.size());
    CHECK(is_terminal(chunks[1]));
    CHECK_FALSE(is_terminal(chunks[0]));
  }
  // Trailing whitespace stays with the keyword.
  Bytes body = filler(252);
  const std::string tail = "</html>\n\n";
  std::copy(tail.begin(), tail.end(), body.end() - static_cast<std::ptrdiff_t>(tail.size()));
  auto chunks = slice_payload(body);
  REQUIRE(chunks.size() == 2);
  CHECK(to_string(chunks[1]) == tail);
}

TEST_CASE("slice then reassemble is the identity on random bodies") {
  std::mt19937_64 gen(2024);
  std::uniform_int_distribution<std::size_t> len(1, 10240);
  for (int i = 0; i < 10000; ++i) {
    Bytes body = random_body(gen, len(gen));
    if (body.size() < kTerminalKeyword.size()) body.resize(kTerminalKeyword.size());
    if (i % 2 == 0) {
      std::copy(kTerminalKeyword.begin(), kTerminalKeyword.end(), body.end() - 7);
    } else {
      body.insert(body.end(), kTerminalKeyword.begin(), kTerminalKeyword.end());
      body.push_back('\n');
    }
    const auto chunks = slice_payload(body);
    REQUIRE(reassemble(to_set(chunks)) == body);
  }
}

TEST_CASE("large bodies round-trip") {
  std::mt19937_64 gen(5);
  for (std::size_t n : {20000u, 40000u, 65536u}) {
    Bytes body = random_body(gen, n - 7);
    body.insert(body.end(), kTerminalKeyword.begin(), kTerminalKeyword.end());
    CHECK(reassemble(to_set(slice_payload(body))) == body);
  }
}

TEST_CASE("terminal detection") {
  CHECK(is_terminal(std::string_view("<p>hi</p></html>")));
  CHECK(is_terminal(std::string_view("<p>hi</p></html>\n")));
  CHECK(is_terminal(std::string_view("</html> \r\n\t")));
  CHECK_FALSE(is_terminal(std::string_view("<p>hi</p></htm")));
  CHECK_FALSE(is_terminal(std::string_view("</HTML>")));
  CHECK_FALSE(is_terminal(std::string_view("")));
  CHECK_FALSE(is_terminal(std::string_view("</html>x")));
}

TEST_CASE("reassembly integrity") {
  ChunkSet gap;
  gap.add(1, filler(250));
  gap.add(2, filler(250));
  gap.add(4, to_bytes("end</html>"));
  CHECK_THROWS_AS(reassemble(gap), IntegrityError);

  ChunkSet open;
  open.add(1, filler(250));
  open.add(2, filler(10));
  CHECK_THROWS_AS(reassemble(open), IncompleteTransferError);

  ChunkSet misplaced;
  misplaced.add(1, to_bytes("a</html>"));
  misplaced.add(2, filler(10));
  CHECK_THROWS_AS(reassemble(misplaced), IntegrityError);

  ChunkSet conflict;
  conflict.add(1, filler(5));
  CHECK_THROWS_AS(conflict.add(1, filler(6)), IntegrityError);
}

TEST_CASE("retransmitted duplicate chunk is discarded") {
  Bytes body = filler(1000);
  const std::string kw(kTerminalKeyword);
  std::copy(kw.begin(), kw.end(), body.end() - 7);
  const auto chunks = slice_payload(body);
  REQUIRE(chunks.size() == 4);
  ChunkSet set;
  CHECK(set.add(1, chunks[0]));
  CHECK(set.add(2, chunks[1]));
  CHECK(set.add(3, chunks[2]));
  CHECK_FALSE(set.add(3, chunks[2]));
  CHECK(set.add(4, chunks[3]));
  CHECK(set.size() == 4);
  CHECK(reassemble(set) == body);
}

TEST_CASE("describe gives a compact summary") {
  CHECK(describe(Frame{0, 1, FrameKind::data, 3, filler(250)}) == "DATA 0>1 #3 len=250");
  CHECK(kind_from_name("VERSION_QUERY") == FrameKind::version_query);
  CHECK_FALSE(kind_from_name("NOPE").has_value());
}
