#include "sc2/bitstream.hpp"

#include "sc2/error.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

namespace sc2 {

namespace {

struct BitWriter {
    std::vector<std::uint8_t> bytes;
    std::size_t bits = 0;

    void put(std::uint32_t value, std::size_t width) {
        for (std::size_t i = width; i-- > 0;) {
            if (bits % 8 == 0) {
                bytes.push_back(0);
            }
            if ((value >> i) & 1u) {
                bytes.back() |= static_cast<std::uint8_t>(0x80u >> (bits % 8));
            }
            ++bits;
        }
    }
};

struct BitReader {
    const std::vector<std::uint8_t> & bytes;
    std::size_t limit;
    std::size_t pos = 0;
    std::size_t base = 0;

    std::uint32_t get(std::size_t width) {
        if (pos + width > limit) {
            throw FramingError("token payload truncated: need " + std::to_string(pos + width) + " bits, have " +
                                   std::to_string(limit),
                               base + pos / 8);
        }
        std::uint32_t v = 0;
        for (std::size_t i = 0; i < width; ++i, ++pos) {
            v = (v << 1) | ((bytes[pos / 8] >> (7 - pos % 8)) & 1u);
        }
        return v;
    }
};

template <typename U>
void put_le(std::vector<std::uint8_t> & out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

template <typename U>
U get_le(const std::vector<std::uint8_t> & in, std::size_t at) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        v |= static_cast<U>(static_cast<U>(in[at + i]) << (8 * i));
    }
    return v;
}

std::size_t sq_width(const QuantizerConfig & cfg) { return cfg.sq_bits() / cfg.sq_dims; }

} // namespace

std::size_t payload_bits(std::size_t frame_count, const QuantizerConfig & cfg) {
    return frame_count * cfg.bits_per_frame();
}

std::vector<std::uint8_t> pack_tokens(const std::vector<TokenFrame> & frames, const QuantizerConfig & cfg) {
    BitWriter w;
    w.bytes.reserve((payload_bits(frames.size(), cfg) + 7) / 8);
    const std::size_t sw = sq_width(cfg), vw = cfg.vq_bits();
    for (const auto & f : frames) {
        validate_token(f, cfg);
        for (auto s : f.sq) {
            w.put(s, sw);
        }
        w.put(f.vq1, vw);
        w.put(f.vq2, vw);
    }
    return w.bytes;
}

std::vector<TokenFrame> unpack_token_bits(const std::vector<std::uint8_t> & bytes, std::size_t bit_count,
                                          std::size_t frame_count, const QuantizerConfig & cfg) {
    if (bit_count > bytes.size() * 8) {
        throw ContractError("bit count exceeds buffer");
    }
    BitReader r{bytes, bit_count};
    const std::size_t sw = sq_width(cfg), vw = cfg.vq_bits();
    std::vector<TokenFrame> out(frame_count);
    for (auto & f : out) {
        for (auto & s : f.sq) {
            s = static_cast<std::uint8_t>(r.get(sw));
        }
        f.vq1 = static_cast<std::uint16_t>(r.get(vw));
        f.vq2 = static_cast<std::uint16_t>(r.get(vw));
    }
    return out;
}

std::vector<TokenFrame> unpack_tokens(const std::vector<std::uint8_t> & bytes, std::size_t frame_count,
                                      const QuantizerConfig & cfg, std::size_t base_offset) {
    BitReader r{bytes, bytes.size() * 8, 0, base_offset};
    const std::size_t sw = sq_width(cfg), vw = cfg.vq_bits();
    std::vector<TokenFrame> out;
    out.reserve(frame_count);
    for (std::size_t n = 0; n < frame_count; ++n) {
        TokenFrame f;
        for (auto & s : f.sq) {
            s = static_cast<std::uint8_t>(r.get(sw));
        }
        f.vq1 = static_cast<std::uint16_t>(r.get(vw));
        f.vq2 = static_cast<std::uint16_t>(r.get(vw));
        out.push_back(f);
    }
    return out;
}

std::vector<std::uint8_t> header_bytes(const BitstreamHeader & h) {
    std::vector<std::uint8_t> out(bitstream_magic, bitstream_magic + 4);
    out.push_back(h.version);
    put_le<std::uint32_t>(out, h.sample_rate);
    put_le<std::uint16_t>(out, h.hop);
    out.push_back(h.downsample_factor);
    out.push_back(h.bits_per_frame);
    put_le<std::uint64_t>(out, h.frame_count);
    put_le<std::uint64_t>(out, h.config_hash);
    return out;
}

BitstreamHeader parse_header(const std::vector<std::uint8_t> & bytes) {
    for (std::size_t i = 0; i < 4; ++i) {
        if (i >= bytes.size()) {
            throw FramingError("bitstream ends inside the magic", bytes.size());
        }
        if (bytes[i] != static_cast<std::uint8_t>(bitstream_magic[i])) {
            throw FormatError("not an SC2 bitstream (bad magic)");
        }
    }
    if (bytes.size() < 5) {
        throw FramingError("bitstream ends before the version byte", bytes.size());
    }
    BitstreamHeader h;
    h.version = bytes[4];
    if (h.version != bitstream_version) {
        throw FormatError("unsupported bitstream version " + std::to_string(h.version));
    }
    if (bytes.size() < bitstream_header_bytes) {
        throw FramingError("bitstream header truncated", bytes.size());
    }
    h.sample_rate = get_le<std::uint32_t>(bytes, 5);
    h.hop = get_le<std::uint16_t>(bytes, 9);
    h.downsample_factor = bytes[11];
    h.bits_per_frame = bytes[12];
    h.frame_count = get_le<std::uint64_t>(bytes, 13);
    h.config_hash = get_le<std::uint64_t>(bytes, 21);
    if (h.bits_per_frame != QuantizerConfig{}.bits_per_frame()) {
        throw FormatError("unsupported bits_per_frame " + std::to_string(h.bits_per_frame));
    }
    return h;
}

std::vector<std::uint8_t> serialize_bitstream(const BitstreamHeader & h, const std::vector<TokenFrame> & tokens) {
    if (h.frame_count != tokens.size()) {
        throw ContractError("header frame_count " + std::to_string(h.frame_count) + " but " +
                            std::to_string(tokens.size()) + " tokens");
    }
    auto out = header_bytes(h);
    const auto payload = pack_tokens(tokens);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Bitstream parse_bitstream(const std::vector<std::uint8_t> & bytes) {
    Bitstream b;
    b.header = parse_header(bytes);
    const std::size_t need = (payload_bits(b.header.frame_count) + 7) / 8;
    const std::size_t have = bytes.size() - bitstream_header_bytes;
    if (have < need) {
        // decode what is there so the error points at the first short frame
        std::vector<std::uint8_t> payload(bytes.begin() + bitstream_header_bytes, bytes.end());
        unpack_tokens(payload, b.header.frame_count, {}, bitstream_header_bytes);
        throw FramingError("token payload truncated", bytes.size());
    }
    if (have > need) {
        throw FramingError("trailing bytes after token payload", bitstream_header_bytes + need);
    }
    std::vector<std::uint8_t> payload(bytes.begin() + bitstream_header_bytes, bytes.end());
    b.tokens = unpack_tokens(payload, b.header.frame_count, {}, bitstream_header_bytes);
    return b;
}

std::size_t write_bitstream(std::ostream & sink, const BitstreamHeader & h, const std::vector<TokenFrame> & tokens) {
    const auto bytes = serialize_bitstream(h, tokens);
    sink.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!sink) {
        throw Error("bitstream write failed");
    }
    return bytes.size();
}

Bitstream read_bitstream(std::istream & source) {
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(source)), std::istreambuf_iterator<char>());
    return parse_bitstream(bytes);
}

void write_bitstream_file(const std::string & path, const BitstreamHeader & h, const std::vector<TokenFrame> & tokens) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw Error("cannot open " + path + " for writing");
    }
    write_bitstream(f, h, tokens);
}

Bitstream read_bitstream_file(const std::string & path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw LoadError("cannot open bitstream " + path);
    }
    return read_bitstream(f);
}

void check_config_hash(const BitstreamHeader & h, std::uint64_t expected) {
    if (h.config_hash != expected) {
        std::ostringstream m;
        m << "bitstream config hash " << std::hex << h.config_hash << " does not match model " << expected;
        throw ConfigMismatchError(m.str());
    }
}

} // namespace sc2
