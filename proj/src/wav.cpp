#include "sc2/wav.hpp"

#include "sc2/error.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sc2 {

namespace {

std::uint32_t u32(const std::vector<std::uint8_t> & b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
           static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

std::uint16_t u16(const std::vector<std::uint8_t> & b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

void put32(std::vector<std::uint8_t> & b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void put16(std::vector<std::uint8_t> & b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
}

} // namespace

std::int16_t to_pcm16(float v) {
    const double s = std::nearbyint(static_cast<double>(v) * 32768.0);
    if (std::isnan(s)) {
        return 0;
    }
    if (s > 32767.0) {
        return 32767;
    }
    if (s < -32768.0) {
        return -32768;
    }
    return static_cast<std::int16_t>(s);
}

WavFile parse_wav(const std::vector<std::uint8_t> & b, std::uint32_t required_rate) {
    if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
        throw InputError("not a RIFF/WAVE file");
    }
    WavFile w;
    bool have_fmt = false;
    std::uint16_t bits = 0;
    std::size_t at = 12;
    while (at + 8 <= b.size()) {
        const std::uint32_t size = u32(b, at + 4);
        const std::size_t body = at + 8;
        if (size > b.size() - body) {
            throw InputError("WAV chunk runs past the end of the file");
        }
        if (std::memcmp(b.data() + at, "fmt ", 4) == 0) {
            if (size < 16) {
                throw InputError("WAV fmt chunk too short");
            }
            const std::uint16_t format = u16(b, body);
            w.channels = u16(b, body + 2);
            w.sample_rate = u32(b, body + 4);
            bits = u16(b, body + 14);
            if (format != 1 || bits != 16) {
                throw InputError("WAV must be 16-bit PCM (got format " + std::to_string(format) + ", " +
                                 std::to_string(bits) + " bits); convert with e.g. `sox in.wav -b 16 out.wav`");
            }
            if (w.channels != 1) {
                throw InputError("WAV must be mono (got " + std::to_string(w.channels) +
                                 " channels); downmix with e.g. `sox in.wav -c 1 out.wav`");
            }
            if (w.sample_rate != required_rate) {
                throw InputError("WAV must be " + std::to_string(required_rate) + " Hz (got " +
                                 std::to_string(w.sample_rate) + "); no resampling is done, convert with e.g. `sox in.wav -r " +
                                 std::to_string(required_rate) + " out.wav`");
            }
            have_fmt = true;
        } else if (std::memcmp(b.data() + at, "data", 4) == 0) {
            if (!have_fmt) {
                throw InputError("WAV data chunk before fmt chunk");
            }
            const std::size_t n = size / 2;
            w.samples.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                w.samples[i] = static_cast<float>(static_cast<std::int16_t>(u16(b, body + 2 * i))) / 32768.f;
            }
            return w;
        }
        at = body + size + (size & 1u);
    }
    throw InputError("WAV has no data chunk");
}

WavFile read_wav(const std::string & path, std::uint32_t required_rate) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw InputError("cannot open " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return parse_wav(bytes, required_rate);
    } catch (const InputError & e) {
        throw InputError(path + ": " + e.what());
    }
}

std::vector<std::uint8_t> wav_bytes(const std::vector<float> & samples, std::uint32_t sample_rate) {
    const std::uint32_t data = static_cast<std::uint32_t>(samples.size() * 2);
    std::vector<std::uint8_t> b;
    b.reserve(44 + data);
    b.insert(b.end(), {'R', 'I', 'F', 'F'});
    put32(b, 36 + data);
    b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put32(b, 16);
    put16(b, 1);
    put16(b, 1);
    put32(b, sample_rate);
    put32(b, sample_rate * 2);
    put16(b, 2);
    put16(b, 16);
    b.insert(b.end(), {'d', 'a', 't', 'a'});
    put32(b, data);
    for (float v : samples) {
        put16(b, static_cast<std::uint16_t>(to_pcm16(v)));
    }
    return b;
}

void write_wav(const std::string & path, const std::vector<float> & samples, std::uint32_t sample_rate) {
    const auto b = wav_bytes(samples, sample_rate);
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw Error("cannot open " + path + " for writing");
    }
    f.write(reinterpret_cast<const char *>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!f) {
        throw Error("write failed: " + path);
    }
}

} // namespace sc2
