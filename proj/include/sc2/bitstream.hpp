#pragma once

#include "sc2/quantizer.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sc2 {

inline constexpr char bitstream_magic[4] = {'S', 'C', '2', '\x01'};
inline constexpr std::uint8_t bitstream_version = 1;
inline constexpr std::size_t bitstream_header_bytes = 29;

struct BitstreamHeader {
    std::uint8_t version = bitstream_version;
    std::uint32_t sample_rate = 16000;
    std::uint16_t hop = 160;
    std::uint8_t downsample_factor = 2;
    std::uint8_t bits_per_frame = 34;
    std::uint64_t frame_count = 0;
    std::uint64_t config_hash = 0;

    bool operator==(const BitstreamHeader &) const = default;
};

// Per frame, MSB first: 7 SQ symbols of sq_bits/7 bits, then vq1 and vq2;
// the last byte is zero padded.
std::vector<std::uint8_t> pack_tokens(const std::vector<TokenFrame> & frames, const QuantizerConfig & cfg = {});

// `base_offset` is added to reported byte offsets (position of the payload in a file).
std::vector<TokenFrame> unpack_tokens(const std::vector<std::uint8_t> & bytes, std::size_t frame_count,
                                      const QuantizerConfig & cfg = {}, std::size_t base_offset = 0);

// Bit-level variant: `bit_count` valid bits at the front of `bytes`.
std::vector<TokenFrame> unpack_token_bits(const std::vector<std::uint8_t> & bytes, std::size_t bit_count,
                                          std::size_t frame_count, const QuantizerConfig & cfg = {});

std::size_t payload_bits(std::size_t frame_count, const QuantizerConfig & cfg = {});

std::vector<std::uint8_t> header_bytes(const BitstreamHeader & h);
BitstreamHeader parse_header(const std::vector<std::uint8_t> & bytes);

struct Bitstream {
    BitstreamHeader header;
    std::vector<TokenFrame> tokens;
};

std::vector<std::uint8_t> serialize_bitstream(const BitstreamHeader & h, const std::vector<TokenFrame> & tokens);
Bitstream parse_bitstream(const std::vector<std::uint8_t> & bytes);

// Returns bytes written.
std::size_t write_bitstream(std::ostream & sink, const BitstreamHeader & h, const std::vector<TokenFrame> & tokens);
Bitstream read_bitstream(std::istream & source);
void write_bitstream_file(const std::string & path, const BitstreamHeader & h, const std::vector<TokenFrame> & tokens);
Bitstream read_bitstream_file(const std::string & path);

// Throws ConfigMismatchError when the stream was made by a different model config.
void check_config_hash(const BitstreamHeader & h, std::uint64_t expected);

} // namespace sc2
