#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sc2 {

// 16-bit PCM mono. Samples are scaled to [-1, 1) by 1/32768.
struct WavFile {
    std::uint32_t sample_rate = 16000;
    std::uint16_t channels = 1;
    std::vector<float> samples;
};

// Accepts RIFF/WAVE with a PCM fmt chunk (extra chunks are skipped).
// Rates other than `required_rate`, stereo or non-16-bit data -> InputError.
WavFile read_wav(const std::string & path, std::uint32_t required_rate = 16000);
WavFile parse_wav(const std::vector<std::uint8_t> & bytes, std::uint32_t required_rate = 16000);

// Canonical 44-byte header; samples are scaled by 32768 and saturated.
std::vector<std::uint8_t> wav_bytes(const std::vector<float> & samples, std::uint32_t sample_rate = 16000);
void write_wav(const std::string & path, const std::vector<float> & samples, std::uint32_t sample_rate = 16000);

std::int16_t to_pcm16(float v);

} // namespace sc2
