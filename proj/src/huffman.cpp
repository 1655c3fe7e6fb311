#include "ecnr/huffman.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <tuple>

#include "ecnr/bitio.hpp"
#include "ecnr/common.hpp"

namespace ecnr {

namespace {

std::array<std::uint8_t, 256> tree_lengths(const std::array<std::uint64_t, 256>& freq) {
  std::array<std::uint8_t, 256> lengths{};
  using Node = std::pair<std::uint64_t, int>;  // (weight, id); ids order ties
  std::priority_queue<Node, std::vector<Node>, std::greater<>> heap;
  std::vector<int> parent;
  for (int s = 0; s < 256; ++s) {
    parent.push_back(-1);
    if (freq[s] > 0) heap.emplace(freq[s], s);
  }
  if (heap.empty()) return lengths;
  if (heap.size() == 1) {
    lengths[static_cast<std::size_t>(heap.top().second)] = 1;
    return lengths;
  }
  while (heap.size() > 1) {
    const auto [wa, a] = heap.top();
    heap.pop();
    const auto [wb, b] = heap.top();
    heap.pop();
    const int id = static_cast<int>(parent.size());
    parent.push_back(-1);
    parent[static_cast<std::size_t>(a)] = id;
    parent[static_cast<std::size_t>(b)] = id;
    heap.emplace(wa + wb, id);
  }
  for (int s = 0; s < 256; ++s) {
    if (freq[s] == 0) continue;
    int depth = 0;
    for (int n = s; parent[static_cast<std::size_t>(n)] >= 0; n = parent[static_cast<std::size_t>(n)]) ++depth;
    lengths[static_cast<std::size_t>(s)] = static_cast<std::uint8_t>(std::min(depth, 255));
  }
  return lengths;
}

struct DecodeTable {
  std::array<std::uint32_t, kMaxHuffmanLength + 2> first{};
  std::array<std::uint32_t, kMaxHuffmanLength + 2> count{};
  std::array<std::uint32_t, kMaxHuffmanLength + 2> offset{};
  std::vector<std::uint8_t> symbols;  // sorted by (length, symbol)
};

DecodeTable build_table(const std::array<std::uint8_t, 256>& lengths) {
  DecodeTable t;
  for (int s = 0; s < 256; ++s) {
    if (lengths[s] > kMaxHuffmanLength) throw FormatError("Huffman code length exceeds limit");
    if (lengths[s]) ++t.count[lengths[s]];
  }
  // Kraft inequality: sum 2^-len <= 1.
  std::uint64_t kraft = 0;
  for (int len = 1; len <= kMaxHuffmanLength; ++len) kraft += std::uint64_t{t.count[len]} << (kMaxHuffmanLength - len);
  if (kraft > (std::uint64_t{1} << kMaxHuffmanLength)) throw FormatError("Huffman table violates the Kraft inequality");
  std::uint32_t code = 0, index = 0;
  for (int len = 1; len <= kMaxHuffmanLength; ++len) {
    code = (code + (len > 1 ? t.count[len - 1] : 0)) << (len > 1 ? 1 : 0);
    t.first[len] = code;
    t.offset[len] = index;
    index += t.count[len];
  }
  for (int len = 1; len <= kMaxHuffmanLength; ++len)
    for (int s = 0; s < 256; ++s)
      if (lengths[s] == len) t.symbols.push_back(static_cast<std::uint8_t>(s));
  return t;
}

}  // namespace

std::array<std::uint8_t, 256> huffman_lengths(const std::array<std::uint64_t, 256>& freq) {
  auto f = freq;
  for (;;) {
    auto lengths = tree_lengths(f);
    if (*std::max_element(lengths.begin(), lengths.end()) <= kMaxHuffmanLength) return lengths;
    for (auto& v : f)
      if (v > 0) v = std::max<std::uint64_t>(1, v / 2);
  }
}

std::array<std::uint32_t, 256> canonical_codes(const std::array<std::uint8_t, 256>& lengths) {
  std::array<std::uint32_t, 256> codes{};
  std::vector<int> order;
  for (int s = 0; s < 256; ++s)
    if (lengths[s]) order.push_back(s);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return lengths[a] < lengths[b]; });
  std::uint32_t code = 0;
  int prev = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int len = lengths[order[i]];
    if (i > 0) ++code;
    code <<= (len - prev);
    prev = len;
    codes[static_cast<std::size_t>(order[i])] = code;
  }
  return codes;
}

HuffmanBlob huffman_encode(std::span<const std::uint8_t> input) {
  std::array<std::uint64_t, 256> freq{};
  for (auto b : input) ++freq[b];
  HuffmanBlob blob;
  blob.lengths = huffman_lengths(freq);
  blob.original_length = input.size();
  const auto codes = canonical_codes(blob.lengths);
  std::uint64_t acc = 0;
  int fill = 0;
  blob.bits.reserve(input.size() / 2);
  for (auto b : input) {
    const int len = blob.lengths[b];
    acc = (acc << len) | codes[b];
    fill += len;
    blob.bit_count += static_cast<std::uint64_t>(len);
    while (fill >= 8) {
      fill -= 8;
      blob.bits.push_back(static_cast<std::uint8_t>(acc >> fill));
    }
    acc &= (std::uint64_t{1} << fill) - 1;
  }
  if (fill > 0) blob.bits.push_back(static_cast<std::uint8_t>(acc << (8 - fill)));
  return blob;
}

std::vector<std::uint8_t> huffman_decode(const HuffmanBlob& blob, bool allow_partial) {
  std::vector<std::uint8_t> out;
  if (blob.original_length == 0) return out;
  const DecodeTable t = build_table(blob.lengths);
  if (t.symbols.empty()) throw FormatError("Huffman table has no symbols for non-empty data");
  const std::uint64_t available = std::min<std::uint64_t>(blob.bit_count, std::uint64_t{blob.bits.size()} * 8);
  if (available < blob.bit_count && !allow_partial) throw FormatError("Huffman bitstream is truncated");
  out.reserve(static_cast<std::size_t>(blob.original_length));
  std::uint64_t pos = 0;
  while (out.size() < blob.original_length) {
    std::uint32_t code = 0;
    int len = 0;
    for (;;) {
      if (pos >= available) {
        if (allow_partial) return out;
        throw FormatError("Huffman bitstream ended early");
      }
      code = (code << 1) | ((blob.bits[pos / 8] >> (7 - pos % 8)) & 1u);
      ++pos;
      ++len;
      if (len > kMaxHuffmanLength) throw FormatError("invalid Huffman code in bitstream");
      if (code - t.first[len] < t.count[len] && code >= t.first[len]) {
        out.push_back(t.symbols[t.offset[len] + (code - t.first[len])]);
        break;
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> HuffmanBlob::to_bytes() const {
  ByteWriter w;
  w.u64(original_length);
  w.u64(bit_count);
  w.bytes(lengths);
  w.bytes(bits);
  return w.take();
}

HuffmanBlob HuffmanBlob::from_bytes(std::span<const std::uint8_t> data, bool allow_partial) {
  ByteReader r(data, "Huffman blob");
  HuffmanBlob blob;
  blob.original_length = r.u64();
  blob.bit_count = r.u64();
  const auto len = r.bytes(256);
  std::copy(len.begin(), len.end(), blob.lengths.begin());
  const std::uint64_t want = (blob.bit_count + 7) / 8;
  if (r.remaining() < want && !allow_partial) throw FormatError("Huffman bitstream is truncated");
  if (r.remaining() > want) throw FormatError("trailing bytes after Huffman bitstream");
  const auto rest = r.bytes(r.remaining());
  blob.bits.assign(rest.begin(), rest.end());
  if (blob.bit_count < blob.original_length && blob.original_length > 0)
    throw FormatError("Huffman bit count too small for declared length");
  return blob;
}

}  // namespace ecnr
