#include "sc2/synth.hpp"

#include "sc2/error.hpp"
#include "sc2/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

namespace sc2 {

std::vector<float> synth_utterance(std::uint64_t seed, double seconds, std::uint32_t sample_rate) {
    if (!(seconds >= 0.0)) {
        throw ConfigError("synth: seconds must be >= 0");
    }
    const std::size_t n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double sr = sample_rate, two_pi = 2.0 * std::numbers::pi;

    const double f0 = 80.0 + 220.0 * u(rng);
    const double glide = 0.8 + 0.4 * u(rng); // f0 at the end relative to the start
    const double am_rate = 2.0 + 4.0 * u(rng);
    const double am_phase = two_pi * u(rng);
    const double tilt = 0.6 + 0.8 * u(rng);
    const std::size_t harmonics = std::clamp<std::size_t>(static_cast<std::size_t>(7000.0 / (f0 * glide)), 1, 40);
    std::vector<double> amp(harmonics), phase(harmonics);
    const double formant = 300.0 + 2200.0 * u(rng);
    for (std::size_t h = 0; h < harmonics; ++h) {
        const double fh = f0 * static_cast<double>(h + 1);
        const double bump = 1.0 + 2.0 * std::exp(-std::pow((fh - formant) / 400.0, 2.0));
        amp[h] = bump / std::pow(static_cast<double>(h + 1), tilt);
        phase[h] = two_pi * u(rng);
    }

    std::vector<double> voiced(n, 0.0);
    double acc = 0.0; // running f0 phase
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        const double frac = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
        const double f = f0 * (1.0 + (glide - 1.0) * frac);
        acc += two_pi * f / sr;
        double v = 0.0;
        for (std::size_t h = 0; h < harmonics; ++h) {
            if (f * static_cast<double>(h + 1) < 0.45 * sr) {
                v += amp[h] * std::sin(static_cast<double>(h + 1) * acc + phase[h]);
            }
        }
        const double env = 0.15 + 0.85 * std::pow(0.5 * (1.0 + std::sin(two_pi * am_rate * t + am_phase)), 1.5);
        voiced[i] = v * env;
    }

    // one-pole low-passed white noise scaled to 20 dB below the voiced power
    std::normal_distribution<double> nd(0.0, 1.0);
    const double alpha = 0.3 + 0.6 * u(rng);
    std::vector<double> noise(n);
    double state = 0.0;
    for (auto & x : noise) {
        state = alpha * state + (1.0 - alpha) * nd(rng);
        x = state;
    }
    double pv = 0.0, pn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        pv += voiced[i] * voiced[i];
        pn += noise[i] * noise[i];
    }
    const double g = pn > 0.0 ? std::sqrt(pv / pn / 100.0) : 0.0;
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        voiced[i] += g * noise[i];
        peak = std::max(peak, std::abs(voiced[i]));
    }
    std::vector<float> out(n);
    const double scale = peak > 0.0 ? 0.5 / peak : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = static_cast<float>(voiced[i] * scale);
    }
    return out;
}

std::vector<std::string> synth_dataset(const std::string & dir, std::uint64_t seed, std::size_t count,
                                       double seconds) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> paths;
    for (std::size_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "utt_%04zu.wav", i);
        const auto path = (std::filesystem::path(dir) / name).string();
        write_wav(path, synth_utterance(seed * 100003 + i, seconds));
        paths.push_back(path);
    }
    return paths;
}

} // namespace sc2
