#pragma once

#include "sc2/dsp.hpp"

#include <span>
#include <vector>

namespace sc2::metrics {

// hyp cut or zero-padded to ref's length
std::vector<float> align_length(std::span<const float> hyp, std::size_t length);

// mean over frames of sqrt(mean over bins of (10 log10 P_ref - 10 log10 P_hyp)^2),
// P = |STFT|^2 + 1e-9, Hann fft 1024, hop 256. Equal lengths required.
double lsd(std::span<const float> ref, std::span<const float> hyp, std::size_t fft = 1024, std::size_t hop = 256);

inline constexpr double snr_cap_db = 99.0;

// 10 log10(|ref|^2 / |ref - hyp|^2), clamped to [-99, 99] dB
double snr(std::span<const float> ref, std::span<const float> hyp);

// mean |log-mel(ref) - log-mel(hyp)|, the mel training loss on fixed audio
double mel_distance(std::span<const float> ref, std::span<const float> hyp, const dsp::MelConfig & cfg = {});

struct TTestResult {
    double t = 0;
    double p = 1;
    std::size_t df = 0;
    double mean_difference = 0;
};

// Paired two-sided t-test on a - b. With zero-variance differences p is 0
// when the mean differs from zero and 1 otherwise.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// Student t CDF through the regularized incomplete beta function.
double student_t_cdf(double t, double df);

} // namespace sc2::metrics
