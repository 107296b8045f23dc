#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sc2 {

// Speech-like test signal: a harmonic stack (f0 in [80, 300] Hz with a slow
// glide) under a syllable-rate amplitude envelope, plus low-passed noise at
// 20 dB SNR. Peak-normalized to 0.5. Same seed -> same samples.
std::vector<float> synth_utterance(std::uint64_t seed, double seconds, std::uint32_t sample_rate = 16000);

// Writes utt_0000.wav ... into `dir` (created if needed); returns the paths.
std::vector<std::string> synth_dataset(const std::string & dir, std::uint64_t seed, std::size_t count,
                                       double seconds);

} // namespace sc2
