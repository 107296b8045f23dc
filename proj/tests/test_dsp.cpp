#include "doctest.h"

#include "sc2/dsp.hpp"
#include "sc2/error.hpp"
#include "sc2/grad_check.hpp"
#include "sc2/ops.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace sc2;
using namespace sc2::dsp;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, scale);
    std::vector<double> v(n);
    for (auto & x : v) {
        x = nd(rng);
    }
    return v;
}

// textbook DCT-IV style MDCT, long double, scaled by sqrt(2/M)
long double naive_mdct(const std::vector<double> & x, std::size_t f, std::size_t k, std::size_t m) {
    long double acc = 0;
    const long double pi = std::numbers::pi_v<long double>;
    for (std::size_t n = 0; n < 2 * m; ++n) {
        const long src = static_cast<long>(f * m + n) - static_cast<long>(m);
        const long double xv = (src >= 0 && src < static_cast<long>(x.size())) ? x[src] : 0.0L;
        const long double w = std::sin(pi * (n + 0.5L) / (2.0L * m));
        acc += w * xv * std::cos(pi / m * (n + 0.5L + m / 2.0L) * (k + 0.5L));
    }
    return acc * std::sqrt(2.0L / m);
}

} // namespace

TEST_CASE("mdct config satisfies Princen-Bradley") {
    auto cfg = make_mdct_config();
    CHECK(cfg.hop == 160);
    CHECK(cfg.window_length() == 320);
    for (std::size_t n = 0; n < cfg.hop; ++n) {
        CHECK(std::abs(cfg.window[n] * cfg.window[n] + cfg.window[n + cfg.hop] * cfg.window[n + cfg.hop] - 1.0) <
              1e-7);
    }
}

TEST_CASE("mdct of zeros and empty audio") {
    auto cfg = make_mdct_config();
    std::vector<float> z(1000, 0.0f);
    auto s = mdct_forward<float>(z, cfg);
    CHECK(s.frames == 7);
    for (float c : s.coefficients) {
        CHECK(c == 0.0f);
    }
    auto e = mdct_forward<float>(std::span<const float>(), cfg);
    CHECK(e.frames == 0);
    CHECK(imdct(e, cfg).empty());
    auto zero_audio = imdct(s, cfg);
    CHECK(zero_audio.size() == 7 * 160);
    for (float v : zero_audio) {
        CHECK(v == 0.0f);
    }
}

TEST_CASE("mdct matches naive summation") {
    auto cfg = make_mdct_config();
    auto x = noise(16000, 1, 0.3);
    auto s = mdct_forward<double>(x, cfg);
    auto sf = mdct_forward<float>(std::vector<float>(x.begin(), x.end()), cfg);
    REQUIRE(s.frames == 100);
    double worst = 0, worst_f = 0;
    for (std::size_t f = 0; f < s.frames; ++f) {
        for (std::size_t k = 0; k < 160; ++k) {
            const double ref = static_cast<double>(naive_mdct(x, f, k, 160));
            worst = std::max(worst, std::abs(s.at(f, k) - ref));
            worst_f = std::max(worst_f, std::abs(static_cast<double>(sf.at(f, k)) - ref));
        }
    }
    CHECK(worst < 1e-12);
    CHECK(worst_f < 1e-6);
}

TEST_CASE("mdct energy is preserved") {
    auto cfg = make_mdct_config();
    auto x = noise(16000, 2);
    auto s = mdct_forward<double>(x, cfg);
    double ex = 0, ec = 0;
    for (double v : x) {
        ex += v * v;
    }
    for (double c : s.coefficients) {
        ec += c * c;
    }
    CHECK(std::abs(ec - ex) / ex < 0.01);
}

TEST_CASE("imdct round trip on interior samples") {
    auto cfg = make_mdct_config();
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> len(481, 4000);
    double worst32 = 0, worst64 = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = len(rng);
        auto x = noise(n, 100 + trial, 0.5);
        std::vector<float> xf(x.begin(), x.end());
        auto y = imdct(mdct_forward<double>(x, cfg), cfg);
        auto yf = imdct(mdct_forward<float>(xf, cfg), cfg);
        const std::size_t frames = mdct_frame_count(n, 160);
        REQUIRE(y.size() == frames * 160);
        // drop first and last hop
        for (std::size_t i = 160; i < (frames - 1) * 160 && i < n; ++i) {
            worst64 = std::max(worst64, std::abs(y[i] - x[i]));
            worst32 = std::max(worst32, static_cast<double>(std::abs(yf[i] - xf[i])));
        }
    }
    CHECK(worst64 < 1e-12);
    CHECK(worst32 < 1e-6);
}

TEST_CASE("single frame synthesis folds halves") {
    auto cfg = make_mdct_config(8);
    const auto & basis = basis_for(cfg);
    const std::size_t m = 8;
    auto seg = noise(2 * m, 9);
    std::vector<double> c(m);
    mdct_frame(seg.data(), basis, c.data());
    std::vector<double> y(2 * m);
    imdct_frame(c.data(), basis, y.data());
    const long double pi = std::numbers::pi_v<long double>;
    for (std::size_t n = 0; n < 2 * m; ++n) {
        long double ref = 0;
        for (std::size_t k = 0; k < m; ++k) {
            ref += c[k] * std::cos(pi / m * (n + 0.5L + m / 2.0L) * (k + 0.5L));
        }
        ref *= std::sqrt(2.0L / m) * cfg.window[n];
        CHECK(std::abs(y[n] - static_cast<double>(ref)) < 1e-12);
    }
    // time-domain aliasing: first half w*(u - Ju), second half w*(u + Ju), u = w*seg
    for (std::size_t n = 0; n < m; ++n) {
        const double ua = cfg.window[n] * seg[n], ja = cfg.window[m - 1 - n] * seg[m - 1 - n];
        CHECK(y[n] == doctest::Approx(cfg.window[n] * (ua - ja)).epsilon(1e-10));
        const double ub = cfg.window[m + n] * seg[m + n], jb = cfg.window[2 * m - 1 - n] * seg[2 * m - 1 - n];
        CHECK(y[m + n] == doctest::Approx(cfg.window[m + n] * (ub + jb)).epsilon(1e-10));
    }
    // a one-frame spectrum synthesizes the second half only
    MdctSpectrum<double> one{1, m, c};
    auto out = imdct(one, cfg);
    REQUIRE(out.size() == m);
    for (std::size_t n = 0; n < m; ++n) {
        CHECK(out[n] == y[m + n]);
    }
}

TEST_CASE("imdct rejects bin mismatch") {
    auto cfg = make_mdct_config();
    MdctSpectrum<float> bad{2, 80, std::vector<float>(160)};
    CHECK_THROWS_AS(imdct(bad, cfg), DimensionError);
}

TEST_CASE("mdct frame independence and linearity") {
    auto cfg = make_mdct_config();
    auto x = noise(3200, 4);
    auto base = mdct_forward<double>(x, cfg);
    for (std::size_t f : {0, 5, 19}) {
        auto y = x;
        for (std::size_t i = f * 160; i < (f + 1) * 160; ++i) {
            y[i] += 1.0;
        }
        auto s = mdct_forward<double>(y, cfg);
        for (std::size_t g = 0; g < s.frames; ++g) {
            bool changed = false;
            for (std::size_t k = 0; k < 160; ++k) {
                changed = changed || s.at(g, k) != base.at(g, k);
            }
            CHECK(changed == (g == f || g == f + 1));
        }
    }
    auto z = noise(3200, 5);
    std::vector<double> mix(3200);
    for (std::size_t i = 0; i < mix.size(); ++i) {
        mix[i] = 2.5 * x[i] - 0.75 * z[i];
    }
    auto sz = mdct_forward<double>(z, cfg), sm = mdct_forward<double>(mix, cfg);
    for (std::size_t i = 0; i < sm.coefficients.size(); ++i) {
        CHECK(std::abs(sm.coefficients[i] - (2.5 * base.coefficients[i] - 0.75 * sz.coefficients[i])) < 1e-6);
    }
}

TEST_CASE("imdct_op gradient") {
    auto cfg = make_mdct_config(16);
    auto c = noise(16 * 5, 6);
    Tensor64 t({16, 5}, c, true);
    auto q = noise(80, 7);
    Tensor64 probe({80}, q);
    auto r = grad_check([&] { return ops::sum(ops::mul(imdct_op(t, cfg), probe)); }, {t}, 1e-6);
    CHECK_MESSAGE(r.passed, describe(r));
    // forward matches the plain synthesis
    auto a = imdct_op(t, cfg);
    auto b = imdct(tensor_to_spectrum(t), cfg);
    CHECK(std::vector<double>(a.data().begin(), a.data().end()) == b);
}

TEST_CASE("stft magnitude examples") {
    const std::size_t n = 512, hop = 128;
    std::vector<double> sine(4096);
    for (std::size_t i = 0; i < sine.size(); ++i) {
        sine[i] = std::sin(2.0 * std::numbers::pi * 32.0 * static_cast<double>(i) / static_cast<double>(n));
    }
    std::size_t frames = 0;
    auto mag = stft_magnitude<double>(sine, n, hop, &frames);
    CHECK(frames == 4096 / hop + 1);
    const std::size_t bins = n / 2 + 1;
    // interior frame: energy concentrated at bin 32 (Hann spreads to +-1)
    const std::size_t f = 10;
    std::size_t best = 0;
    for (std::size_t k = 0; k < bins; ++k) {
        if (mag[f * bins + k] > mag[f * bins + best]) {
            best = k;
        }
    }
    CHECK(best == 32);
    for (std::size_t k = 0; k < bins; ++k) {
        if (k < 31 || k > 33) {
            CHECK(mag[f * bins + k] < 1e-9 * mag[f * bins + 32]);
        }
    }

    auto x = noise(3000, 8);
    auto neg = x;
    for (auto & v : neg) {
        v = -v;
    }
    auto m1 = stft_magnitude<double>(x, n, hop), m2 = stft_magnitude<double>(neg, n, hop);
    for (std::size_t i = 0; i < m1.size(); ++i) {
        CHECK(m1[i] == doctest::Approx(m2[i]).epsilon(1e-12));
    }
    for (double v : stft_magnitude<double>(std::vector<double>(1000, 0.0), n, hop)) {
        CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(stft_magnitude<double>(x, 500, hop), ConfigError);
}

TEST_CASE("stft matches direct DFT") {
    const std::size_t n = 64, hop = 16;
    auto x = noise(200, 10);
    std::size_t frames = 0;
    auto mag = stft_magnitude<double>(x, n, hop, &frames);
    auto win = hann_periodic(n);
    const std::size_t bins = n / 2 + 1;
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t k = 0; k < bins; ++k) {
            long double re = 0, im = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const long src = static_cast<long>(f * hop + i) - static_cast<long>(n / 2);
                const double v = (src >= 0 && src < static_cast<long>(x.size())) ? x[src] : 0.0;
                const long double th = 2.0L * std::numbers::pi_v<long double> * k * i / n;
                re += win[i] * v * std::cos(th);
                im -= win[i] * v * std::sin(th);
            }
            CHECK(mag[f * bins + k] == doctest::Approx(static_cast<double>(std::hypot(re, im))).epsilon(1e-10));
        }
    }
}

TEST_CASE("stft op gradient") {
    auto x = noise(150, 11);
    Tensor64 t({150}, x, true);
    auto q = noise(((150 / 16) + 1) * 33, 12);
    Tensor64 probe({150 / 16 + 1, 33}, q);
    auto r = grad_check([&] { return ops::sum(ops::mul(stft_magnitude_op(t, 64, 16), probe)); }, {t}, 1e-6);
    CHECK_MESSAGE(r.passed, describe(r));
}

TEST_CASE("mel filterbank") {
    CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
    CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5));
    MelConfig cfg;
    auto fb = mel_filterbank(cfg);
    const std::size_t bins = cfg.fft_size / 2 + 1;
    REQUIRE(fb.size() == cfg.n_mels * bins);
    std::vector<double> rows(cfg.n_mels, 0.0);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
        for (std::size_t k = 0; k < bins; ++k) {
            rows[m] += fb[m * bins + k];
            CHECK(fb[m * bins + k] >= 0.0);
            CHECK(fb[m * bins + k] <= 1.0);
        }
        CHECK(rows[m] > 0.0);
    }
    CHECK(rows.back() > 4.0 * rows.front());
    MelConfig bad = cfg;
    bad.f_max = 9000;
    CHECK_THROWS_AS(mel_filterbank(bad), ConfigError);
}

TEST_CASE("mel spectrogram examples") {
    MelConfig cfg;
    std::size_t frames = 0;
    auto z = mel_spectrogram<double>(std::vector<double>(4000, 0.0), cfg, &frames);
    CHECK(frames == 4000 / 256 + 1);
    for (double v : z) {
        CHECK(v == doctest::Approx(std::log(1e-5)));
    }
    auto x = noise(8000, 13, 0.1);
    auto x2 = x;
    for (auto & v : x2) {
        v *= 2.0;
    }
    auto a = mel_spectrogram<double>(x, cfg), b = mel_spectrogram<double>(x2, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > std::log(1e-5) + 1.0) {
            CHECK(b[i] - a[i] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
        }
    }
}

TEST_CASE("white noise mel energy follows filter widths") {
    MelConfig cfg;
    auto fb = mel_filterbank(cfg);
    const std::size_t bins = cfg.fft_size / 2 + 1;
    auto x = noise(160000, 14);
    std::size_t frames = 0;
    auto mel = mel_spectrogram<double>(x, cfg, &frames);
    std::vector<double> avg(cfg.n_mels, 0.0);
    for (std::size_t f = 2; f + 2 < frames; ++f) {
        for (std::size_t m = 0; m < cfg.n_mels; ++m) {
            avg[m] += std::exp(mel[f * cfg.n_mels + m]);
        }
    }
    // E[mel_m] = row_sum_m * E|X|, so mel energy per unit filter weight is flat
    std::vector<double> ratio(cfg.n_mels);
    double mean_ratio = 0;
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
        double row = 0;
        for (std::size_t k = 0; k < bins; ++k) {
            row += fb[m * bins + k];
        }
        ratio[m] = avg[m] / row;
        mean_ratio += ratio[m] / cfg.n_mels;
    }
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
        CHECK(std::abs(ratio[m] / mean_ratio - 1.0) < 0.1);
    }
    CHECK(avg.back() > avg.front());
}

TEST_CASE("mel op matches plain and has correct gradient") {
    MelConfig cfg;
    cfg.fft_size = 64;
    cfg.hop = 16;
    cfg.n_mels = 8;
    auto x = noise(120, 15, 0.5);
    Tensor64 t({120}, x, true);
    auto plain = mel_spectrogram<double>(x, cfg);
    auto op = mel_spectrogram_op(t, cfg);
    REQUIRE(op.numel() == plain.size());
    for (std::size_t i = 0; i < plain.size(); ++i) {
        CHECK(op.data()[i] == doctest::Approx(plain[i]).epsilon(1e-12));
    }
    auto q = noise(op.numel(), 16);
    Tensor64 probe(op.shape(), q);
    auto r = grad_check([&] { return ops::sum(ops::mul(mel_spectrogram_op(t, cfg), probe)); }, {t}, 1e-5);
    CHECK_MESSAGE(r.passed, describe(r));
}
