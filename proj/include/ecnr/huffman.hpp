#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace ecnr {

/// Canonical Huffman coding over the byte alphabet. Only code lengths are stored;
/// codes are rebuilt by assigning consecutive values in (length, symbol) order.
struct HuffmanBlob {
  std::array<std::uint8_t, 256> lengths{};  ///< 0 = symbol absent
  std::uint64_t original_length = 0;
  std::uint64_t bit_count = 0;
  std::vector<std::uint8_t> bits;  ///< MSB-first code stream

  std::vector<std::uint8_t> to_bytes() const;
  /// Parses a serialized blob; with `allow_partial` a truncated bitstream is accepted.
  static HuffmanBlob from_bytes(std::span<const std::uint8_t> data, bool allow_partial = false);
};

inline constexpr int kMaxHuffmanLength = 32;

/// Code lengths for the given symbol frequencies, capped at kMaxHuffmanLength.
/// A single present symbol gets length 1.
std::array<std::uint8_t, 256> huffman_lengths(const std::array<std::uint64_t, 256>& freq);

/// Canonical codes for a length table.
std::array<std::uint32_t, 256> canonical_codes(const std::array<std::uint8_t, 256>& lengths);

HuffmanBlob huffman_encode(std::span<const std::uint8_t> input);

/// Decodes a blob. With `allow_partial`, a short bitstream yields the decodable prefix
/// instead of an error.
std::vector<std::uint8_t> huffman_decode(const HuffmanBlob& blob, bool allow_partial = false);

}  // namespace ecnr
