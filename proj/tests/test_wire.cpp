#include <doctest.h>

#include <cstdint>
#include <limits>

#include "spores/bytes.hpp"
#include "spores/wire.hpp"

using spores::Bytes;
using spores::to_bytes;
using spores::to_hex;
using spores::view;

TEST_CASE("writer emits big-endian golden bytes") {
  spores::wire::Writer w;
  w.u8(0xab);
  w.u16(0x0102);
  w.u32(0xdeadbeef);
  w.u64(0x0123456789abcdefULL);
  CHECK(to_hex(w.bytes()) == "ab0102deadbeef0123456789abcdef");
}

TEST_CASE("f64 is the big-endian IEEE-754 image") {
  spores::wire::Writer w;
  w.f64(1.0);
  CHECK(to_hex(w.bytes()) == "3ff0000000000000");

  spores::wire::Writer w2;
  w2.f64(-2.0);
  CHECK(to_hex(w2.bytes()) == "c000000000000000");

  spores::wire::Writer w3;
  w3.f64(0.0);
  CHECK(to_hex(w3.bytes()) == "0000000000000000");
}

TEST_CASE("blob16 is a u16 length prefix plus payload") {
  spores::wire::Writer w;
  w.blob16(view(to_bytes("hi")));
  CHECK(to_hex(w.bytes()) == "00026869");

  spores::wire::Writer empty;
  empty.blob16(spores::ByteView{});
  CHECK(to_hex(empty.bytes()) == "0000");

  Bytes big(0x10000, 0);
  spores::wire::Writer overflow;
  CHECK_THROWS_AS(overflow.blob16(view(big)), spores::wire::Error);
}

TEST_CASE("round trip covers every field type") {
  spores::wire::Writer w;
  w.u8(0xff);
  w.u16(0xffff);
  w.u32(0xffffffffu);
  w.u64(std::numeric_limits<std::uint64_t>::max());
  w.f64(0.1);
  w.f64(-std::numeric_limits<double>::infinity());
  w.blob16(view(to_bytes("payload")));
  w.raw(view(to_bytes("tail")));
  Bytes buf = w.take();

  spores::wire::Reader r(view(buf));
  CHECK(r.u8() == 0xff);
  CHECK(r.u16() == 0xffff);
  CHECK(r.u32() == 0xffffffffu);
  CHECK(r.u64() == std::numeric_limits<std::uint64_t>::max());
  CHECK(r.f64() == 0.1);  // bit-exact, not approximate
  CHECK(r.f64() == -std::numeric_limits<double>::infinity());
  CHECK(r.blob16() == to_bytes("payload"));
  CHECK(r.remaining() == 4);
  CHECK(r.raw(4) == to_bytes("tail"));
  CHECK(r.done());
  CHECK_NOTHROW(r.expect_done());
}

TEST_CASE("reader throws on truncated input") {
  Bytes three{0x01, 0x02, 0x03};
  spores::wire::Reader r(view(three));
  CHECK_THROWS_AS(r.u32(), spores::wire::Error);

  spores::wire::Reader r2(view(three));
  r2.u16();
  CHECK_THROWS_AS(r2.u16(), spores::wire::Error);

  // blob16 whose declared length exceeds the remaining bytes
  Bytes bad{0x00, 0x05, 0x61};
  spores::wire::Reader r3(view(bad));
  CHECK_THROWS_AS(r3.blob16(), spores::wire::Error);

  spores::wire::Reader r4(spores::ByteView{});
  CHECK_THROWS_AS(r4.u8(), spores::wire::Error);
}

TEST_CASE("expect_done rejects trailing bytes") {
  Bytes buf{0x01, 0x02};
  spores::wire::Reader r(view(buf));
  r.u8();
  CHECK_FALSE(r.done());
  CHECK_THROWS_AS(r.expect_done(), spores::wire::Error);
}

TEST_CASE("view aliases the buffer without copying") {
  Bytes buf{0x10, 0x20, 0x30};
  spores::wire::Reader r(view(buf));
  spores::ByteView v = r.view(2);
  CHECK(v.size() == 2);
  CHECK(v.data() == buf.data());
  CHECK(r.remaining() == 1);
}

TEST_CASE("hex helpers invert each other") {
  Bytes all;
  for (int i = 0; i < 256; ++i) all.push_back(static_cast<std::uint8_t>(i));
  CHECK(spores::from_hex(to_hex(all)) == all);
  CHECK(to_hex(Bytes{}) == "");
  CHECK_THROWS(spores::from_hex("abc"));   // odd length
  CHECK_THROWS(spores::from_hex("zz"));    // bad digit
}
