#include "sc2/metrics.hpp"

#include "sc2/error.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <cmath>
#include <limits>

namespace sc2::metrics {

std::vector<float> align_length(std::span<const float> hyp, std::size_t length) {
    std::vector<float> out(length, 0.f);
    std::copy_n(hyp.begin(), std::min(length, hyp.size()), out.begin());
    return out;
}

namespace {

void require_equal(std::span<const float> a, std::span<const float> b, const char * what) {
    if (a.size() != b.size()) {
        throw DimensionError(std::string(what) + ": lengths " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    }
}

} // namespace

double lsd(std::span<const float> ref, std::span<const float> hyp, std::size_t fft, std::size_t hop) {
    require_equal(ref, hyp, "lsd");
    if (ref.empty()) {
        return 0.0;
    }
    const std::vector<double> r(ref.begin(), ref.end()), h(hyp.begin(), hyp.end());
    std::size_t frames = 0;
    const auto mr = dsp::stft_magnitude<double>(r, fft, hop, &frames);
    const auto mh = dsp::stft_magnitude<double>(h, fft, hop, &frames);
    const std::size_t bins = fft / 2 + 1;
    double total = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t k = 0; k < bins; ++k) {
            const double a = mr[f * bins + k], b = mh[f * bins + k];
            const double d = std::log10(a * a + 1e-9) - std::log10(b * b + 1e-9);
            acc += d * d * 100.0;
        }
        total += std::sqrt(acc / static_cast<double>(bins));
    }
    return total / static_cast<double>(frames);
}

double snr(std::span<const float> ref, std::span<const float> hyp) {
    require_equal(ref, hyp, "snr");
    double s = 0.0, e = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double d = static_cast<double>(ref[i]) - static_cast<double>(hyp[i]);
        s += static_cast<double>(ref[i]) * ref[i];
        e += d * d;
    }
    if (e == 0.0) {
        return snr_cap_db;
    }
    if (s == 0.0) {
        return -snr_cap_db;
    }
    return std::clamp(10.0 * std::log10(s / e), -snr_cap_db, snr_cap_db);
}

double mel_distance(std::span<const float> ref, std::span<const float> hyp, const dsp::MelConfig & cfg) {
    require_equal(ref, hyp, "mel_distance");
    const std::vector<double> r(ref.begin(), ref.end()), h(hyp.begin(), hyp.end());
    const auto a = dsp::mel_spectrogram<double>(r, cfg);
    const auto b = dsp::mel_spectrogram<double>(h, cfg);
    if (a.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += std::abs(a[i] - b[i]);
    }
    return acc / static_cast<double>(a.size());
}

double student_t_cdf(double t, double df) {
    if (!(df > 0)) {
        throw ContractError("student_t_cdf: df must be positive");
    }
    if (std::isinf(t)) {
        return t > 0 ? 1.0 : 0.0;
    }
    const double x = df / (df + t * t);
    const double tail = 0.5 * boost::math::ibeta(df / 2.0, 0.5, x);
    return t > 0 ? 1.0 - tail : tail;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("paired_t_test: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                             " scores");
    }
    const std::size_t n = a.size();
    if (n < 2) {
        throw ContractError("paired_t_test needs at least two pairs");
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean += a[i] - b[i];
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i] - mean;
        ss += d * d;
    }
    TTestResult r;
    r.df = n - 1;
    r.mean_difference = mean;
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) {
        r.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
        r.p = mean == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    const double x = static_cast<double>(r.df) / (static_cast<double>(r.df) + r.t * r.t);
    r.p = boost::math::ibeta(static_cast<double>(r.df) / 2.0, 0.5, x);
    return r;
}

} // namespace sc2::metrics
