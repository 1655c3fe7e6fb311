#include <doctest.h>

#include <random>

#include "ecnr/bitio.hpp"
#include "ecnr/huffman.hpp"

using namespace ecnr;

namespace {

std::vector<std::uint8_t> random_bytes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint8_t> v(n);
  for (auto& b : v) b = static_cast<std::uint8_t>(rng());
  return v;
}

}  // namespace

TEST_CASE("byte and bit packing") {
  ByteWriter w;
  w.u8(7);
  w.u16(0x1234);
  w.u32(0xdeadbeef);
  w.u64(0x0102030405060708ull);
  w.f32(-1.5f);
  const auto bytes = w.take();
  CHECK(bytes.size() == 19);
  CHECK(bytes[1] == 0x34);
  ByteReader r(bytes);
  CHECK(r.u8() == 7);
  CHECK(r.u16() == 0x1234);
  CHECK(r.u32() == 0xdeadbeef);
  CHECK(r.u64() == 0x0102030405060708ull);
  CHECK(r.f32() == -1.5f);
  CHECK(r.remaining() == 0);
  CHECK_THROWS_WITH_AS(r.u8(), doctest::Contains("truncated at byte 19"), FormatError);

  BitPacker p;
  const std::vector<std::uint32_t> vals{5, 0, 511, 256, 1};
  for (auto v : vals) p.put(v, 9);
  const auto packed = p.take();
  CHECK(packed.size() == packed_bytes(5, 9));
  BitUnpacker u(packed);
  for (auto v : vals) CHECK(u.get(9) == v);
}

TEST_CASE("round trip") {
  for (std::size_t n : {0u, 1u, 2u, 255u, 10240u}) {
    const auto data = random_bytes(n, n);
    const auto blob = huffman_encode(data);
    CHECK(huffman_decode(blob) == data);
    CHECK(huffman_decode(HuffmanBlob::from_bytes(blob.to_bytes())) == data);
  }
}

TEST_CASE("single repeated byte costs one bit per symbol") {
  const std::vector<std::uint8_t> data(1001, 42);
  const auto blob = huffman_encode(data);
  CHECK(blob.lengths[42] == 1);
  CHECK(blob.bit_count == 1001);
  CHECK(blob.bits.size() == (1001 + 7) / 8);
  CHECK(blob.to_bytes().size() == 8 + 8 + 256 + (1001 + 7) / 8);
  CHECK(huffman_decode(blob) == data);
}

TEST_CASE("skewed input compresses") {
  std::mt19937_64 rng(1);
  std::vector<std::uint8_t> data(20000);
  for (auto& b : data) b = (rng() % 10 == 0) ? static_cast<std::uint8_t>(rng()) : 0;
  const auto bytes = huffman_encode(data).to_bytes();
  CHECK(bytes.size() < data.size());
  CHECK(huffman_decode(HuffmanBlob::from_bytes(bytes)) == data);
}

TEST_CASE("codes are prefix-free and canonical") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::array<std::uint64_t, 256> freq{};
    for (auto& f : freq) f = rng() % 5 == 0 ? 0 : (rng() % 1000) * (rng() % 1000);
    freq[static_cast<std::size_t>(trial)] = 1;
    const auto lengths = huffman_lengths(freq);
    const auto codes = canonical_codes(lengths);
    std::vector<int> present;
    for (int s = 0; s < 256; ++s) {
      CHECK((lengths[static_cast<std::size_t>(s)] > 0) == (freq[static_cast<std::size_t>(s)] > 0));
      if (lengths[static_cast<std::size_t>(s)]) present.push_back(s);
    }
    double kraft = 0.0;
    for (int s : present) kraft += std::ldexp(1.0, -lengths[static_cast<std::size_t>(s)]);
    CHECK(kraft <= 1.0);
    for (int a : present)
      for (int b : present) {
        if (a == b) continue;
        const int la = lengths[static_cast<std::size_t>(a)], lb = lengths[static_cast<std::size_t>(b)];
        if (la > lb) continue;
        CHECK((codes[static_cast<std::size_t>(b)] >> (lb - la)) != codes[static_cast<std::size_t>(a)]);
        // canonical: shorter codes or equal-length lower symbols get smaller values
        if (la < lb || (la == lb && a < b))
          CHECK((static_cast<std::uint64_t>(codes[static_cast<std::size_t>(a)]) << (lb - la)) <
                codes[static_cast<std::size_t>(b)]);
      }
  }
}

TEST_CASE("lengths are capped") {
  std::array<std::uint64_t, 256> freq{};
  std::uint64_t a = 1, b = 1;
  for (int s = 0; s < 60; ++s) {
    freq[static_cast<std::size_t>(s)] = a;
    const auto c = a + b;
    a = b;
    b = c;
  }
  const auto lengths = huffman_lengths(freq);
  for (auto l : lengths) CHECK(l <= kMaxHuffmanLength);
  std::vector<std::uint8_t> data;
  for (int s = 0; s < 60; ++s) data.push_back(static_cast<std::uint8_t>(s));
  for (int i = 0; i < 100; ++i) data.push_back(59);
  CHECK(huffman_decode(huffman_encode(data)) == data);
}

TEST_CASE("truncated streams") {
  const auto data = random_bytes(5000, 9);
  const auto bytes = huffman_encode(data).to_bytes();
  const std::span<const std::uint8_t> cut(bytes.data(), bytes.size() - 1000);
  CHECK_THROWS_AS(HuffmanBlob::from_bytes(cut), FormatError);
  const auto prefix = huffman_decode(HuffmanBlob::from_bytes(cut, true), true);
  CHECK(prefix.size() < data.size());
  CHECK(prefix.size() > 3000);
  CHECK(std::equal(prefix.begin(), prefix.end(), data.begin()));
  std::vector<std::uint8_t> extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(HuffmanBlob::from_bytes(extra), FormatError);
}
