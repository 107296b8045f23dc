#include "sc2/dsp.hpp"

#include "sc2/error.hpp"
#include "sc2/ops.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace sc2::dsp {

MdctConfig make_mdct_config(std::size_t hop, std::size_t sample_rate) {
    if (hop < 1) {
        throw ConfigError("mdct hop must be >= 1");
    }
    MdctConfig cfg;
    cfg.hop = hop;
    cfg.sample_rate = sample_rate;
    cfg.window.resize(2 * hop);
    for (std::size_t n = 0; n < 2 * hop; ++n) {
        cfg.window[n] = std::sin(std::numbers::pi * (static_cast<double>(n) + 0.5) / static_cast<double>(2 * hop));
    }
    return cfg;
}

MdctBasis::MdctBasis(const MdctConfig & cfg) : hop_(cfg.hop) {
    const std::size_t m = hop_, n2 = 2 * hop_;
    if (cfg.window.size() != n2) {
        throw ConfigError("mdct window length must be 2*hop");
    }
    table_.resize(m * n2);
    transposed_.resize(m * n2);
    const double scale = std::sqrt(2.0 / static_cast<double>(m));
    const double md = static_cast<double>(m);
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t n = 0; n < n2; ++n) {
            const double v = scale * cfg.window[n] *
                             std::cos(std::numbers::pi / md * (static_cast<double>(n) + 0.5 + md / 2.0) *
                                      (static_cast<double>(k) + 0.5));
            table_[k * n2 + n] = v;
            transposed_[n * m + k] = v;
        }
    }
}

const MdctBasis & basis_for(const MdctConfig & cfg) {
    static std::mutex mu;
    static std::map<std::size_t, std::unique_ptr<MdctBasis>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(cfg.hop);
    if (it == cache.end()) {
        it = cache.emplace(cfg.hop, std::make_unique<MdctBasis>(cfg)).first;
    }
    return *it->second;
}

template <typename T>
void mdct_frame(const T * segment, const MdctBasis & basis, T * coefs) {
    const std::size_t m = basis.hop(), n2 = 2 * m;
    for (std::size_t k = 0; k < m; ++k) {
        const double * b = basis.row(k);
        double acc = 0.0;
        for (std::size_t n = 0; n < n2; ++n) {
            acc += b[n] * static_cast<double>(segment[n]);
        }
        coefs[k] = static_cast<T>(acc);
    }
}

template <typename T>
void imdct_frame(const T * coefs, const MdctBasis & basis, double * out) {
    const std::size_t m = basis.hop(), n2 = 2 * m;
    for (std::size_t n = 0; n < n2; ++n) {
        const double * b = basis.col(n);
        double acc = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            acc += b[k] * static_cast<double>(coefs[k]);
        }
        out[n] = acc;
    }
}

std::size_t mdct_frame_count(std::size_t samples, std::size_t hop) { return (samples + hop - 1) / hop; }

template <typename T>
MdctSpectrum<T> mdct_forward(std::span<const T> audio, const MdctConfig & cfg) {
    const auto & basis = basis_for(cfg);
    const std::size_t m = cfg.hop;
    MdctSpectrum<T> spec;
    spec.bins = m;
    spec.frames = mdct_frame_count(audio.size(), m);
    spec.coefficients.resize(spec.frames * m);
    std::vector<T> seg(2 * m);
    for (std::size_t f = 0; f < spec.frames; ++f) {
        for (std::size_t n = 0; n < 2 * m; ++n) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(f * m + n) - static_cast<std::ptrdiff_t>(m);
            seg[n] = (src >= 0 && src < static_cast<std::ptrdiff_t>(audio.size())) ? audio[src] : T(0);
        }
        mdct_frame(seg.data(), basis, spec.coefficients.data() + f * m);
    }
    return spec;
}

namespace {

// Overlap-add of windowed frame outputs: hop h is second half of frame h plus
// first half of frame h+1, added in that order.
template <typename T>
void overlap_add(const std::vector<double> & frames_out, std::size_t frames, std::size_t m, T * audio) {
    for (std::size_t h = 0; h < frames; ++h) {
        for (std::size_t i = 0; i < m; ++i) {
            double v = frames_out[h * 2 * m + m + i];
            if (h + 1 < frames) {
                v = v + frames_out[(h + 1) * 2 * m + i];
            }
            audio[h * m + i] = static_cast<T>(v);
        }
    }
}

} // namespace

template <typename T>
std::vector<T> imdct(const MdctSpectrum<T> & spec, const MdctConfig & cfg) {
    if (spec.bins != cfg.hop) {
        throw DimensionError("imdct: spectrum has " + std::to_string(spec.bins) + " bins, config hop " +
                             std::to_string(cfg.hop));
    }
    if (spec.coefficients.size() != spec.frames * spec.bins) {
        throw DimensionError("imdct: malformed spectrum");
    }
    const auto & basis = basis_for(cfg);
    const std::size_t m = cfg.hop;
    std::vector<double> tmp(spec.frames * 2 * m);
    for (std::size_t f = 0; f < spec.frames; ++f) {
        imdct_frame(spec.coefficients.data() + f * m, basis, tmp.data() + f * 2 * m);
    }
    std::vector<T> audio(spec.frames * m);
    overlap_add(tmp, spec.frames, m, audio.data());
    return audio;
}

template <typename T>
Tensor<T> spectrum_to_tensor(const MdctSpectrum<T> & spec, bool requires_grad) {
    std::vector<T> v(spec.frames * spec.bins);
    for (std::size_t f = 0; f < spec.frames; ++f) {
        for (std::size_t k = 0; k < spec.bins; ++k) {
            v[k * spec.frames + f] = spec.coefficients[f * spec.bins + k];
        }
    }
    return Tensor<T>({spec.bins, spec.frames}, std::move(v), requires_grad);
}

template <typename T>
MdctSpectrum<T> tensor_to_spectrum(const Tensor<T> & t) {
    if (t.rank() != 2) {
        throw DimensionError("spectrum tensor must be [bins x frames], got " + shape_str(t.shape()));
    }
    MdctSpectrum<T> spec;
    spec.bins = t.dim(0);
    spec.frames = t.dim(1);
    spec.coefficients.resize(spec.bins * spec.frames);
    auto d = t.data();
    for (std::size_t k = 0; k < spec.bins; ++k) {
        for (std::size_t f = 0; f < spec.frames; ++f) {
            spec.coefficients[f * spec.bins + k] = d[k * spec.frames + f];
        }
    }
    return spec;
}

template <typename T>
Tensor<T> imdct_op(const Tensor<T> & coefs, const MdctConfig & cfg) {
    if (coefs.rank() != 2 || coefs.dim(0) != cfg.hop) {
        throw DimensionError("imdct_op: expected [" + std::to_string(cfg.hop) + " x F], got " +
                             shape_str(coefs.shape()));
    }
    auto spec = tensor_to_spectrum(coefs);
    auto audio = imdct(spec, cfg);
    const std::size_t frames = spec.frames;
    const MdctBasis * basis = &basis_for(cfg);
    const std::size_t samples = audio.size();
    return detail::make_result<T>({samples}, std::move(audio), {coefs},
                                  [frames, basis](detail::TensorNode<T> & out) {
                                      auto & in = out.inputs[0];
                                      if (!in || !in->requires_grad) {
                                          return;
                                      }
                                      auto & g = in->ensure_grad();
                                      const std::size_t m = basis->hop();
                                      // frame f's 2M outputs land on samples [(f-1)M, (f+1)M)
                                      for (std::size_t f = 0; f < frames; ++f) {
                                          for (std::size_t k = 0; k < m; ++k) {
                                              const double * b = basis->row(k);
                                              double acc = 0.0;
                                              for (std::size_t n = 0; n < 2 * m; ++n) {
                                                  const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(f * m + n) -
                                                                             static_cast<std::ptrdiff_t>(m);
                                                  if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(frames * m)) {
                                                      acc += b[n] * static_cast<double>(out.grad[pos]);
                                                  }
                                              }
                                              g[k * frames + f] += static_cast<T>(acc);
                                          }
                                      }
                                  });
}

std::vector<double> hann_periodic(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

namespace {

bool is_pow2(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

// FFTW plans and scratch buffers per size. Plan creation and execution are
// serialized; FFTW_ESTIMATE keeps results deterministic across runs.
struct FftPlan {
    std::size_t n;
    double * real;
    fftw_complex * spec;
    fftw_plan forward;
    fftw_plan inverse;
};

std::mutex & fft_mutex() {
    static std::mutex mu;
    return mu;
}

FftPlan & plan_for(std::size_t n) {
    static std::map<std::size_t, FftPlan> plans;
    auto it = plans.find(n);
    if (it == plans.end()) {
        FftPlan p;
        p.n = n;
        p.real = fftw_alloc_real(n);
        p.spec = fftw_alloc_complex(n / 2 + 1);
        p.forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), p.real, p.spec, FFTW_ESTIMATE);
        p.inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n), p.spec, p.real, FFTW_ESTIMATE);
        it = plans.emplace(n, p).first;
    }
    return it->second;
}

void check_stft_args(std::size_t fft_size, std::size_t hop) {
    if (!is_pow2(fft_size)) {
        throw ConfigError("stft: fft_size " + std::to_string(fft_size) + " is not a power of two");
    }
    if (hop < 1) {
        throw ConfigError("stft: hop must be >= 1");
    }
}

// complex spectrum of every frame, [frames x bins] pairs (re, im)
template <typename T>
std::vector<double> stft_complex(std::span<const T> audio, std::size_t fft_size, std::size_t hop,
                                 std::size_t & frames) {
    check_stft_args(fft_size, hop);
    frames = stft_frame_count(audio.size(), hop);
    const std::size_t bins = fft_size / 2 + 1;
    const auto win = hann_periodic(fft_size);
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(fft_size / 2);
    std::vector<double> out(frames * bins * 2);
    std::lock_guard<std::mutex> lock(fft_mutex());
    auto & p = plan_for(fft_size);
    for (std::size_t f = 0; f < frames; ++f) {
        const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(f * hop) - pad;
        for (std::size_t n = 0; n < fft_size; ++n) {
            const std::ptrdiff_t src = start + static_cast<std::ptrdiff_t>(n);
            const double x =
                (src >= 0 && src < static_cast<std::ptrdiff_t>(audio.size())) ? static_cast<double>(audio[src]) : 0.0;
            p.real[n] = win[n] * x;
        }
        fftw_execute(p.forward);
        for (std::size_t k = 0; k < bins; ++k) {
            out[(f * bins + k) * 2] = p.spec[k][0];
            out[(f * bins + k) * 2 + 1] = p.spec[k][1];
        }
    }
    return out;
}

} // namespace

std::size_t stft_frame_count(std::size_t samples, std::size_t hop) { return samples / hop + 1; }

template <typename T>
std::vector<T> stft_magnitude(std::span<const T> audio, std::size_t fft_size, std::size_t hop,
                              std::size_t * frames_out) {
    std::size_t frames = 0;
    auto c = stft_complex(audio, fft_size, hop, frames);
    std::vector<T> mag(c.size() / 2);
    for (std::size_t i = 0; i < mag.size(); ++i) {
        mag[i] = static_cast<T>(std::hypot(c[2 * i], c[2 * i + 1]));
    }
    if (frames_out) {
        *frames_out = frames;
    }
    return mag;
}

template <typename T>
Tensor<T> stft_magnitude_op(const Tensor<T> & audio, std::size_t fft_size, std::size_t hop) {
    if (audio.rank() != 1) {
        throw DimensionError("stft_magnitude_op expects 1-D audio, got " + shape_str(audio.shape()));
    }
    std::size_t frames = 0;
    auto c = stft_complex(audio.data(), fft_size, hop, frames);
    const std::size_t bins = fft_size / 2 + 1;
    std::vector<T> mag(frames * bins);
    for (std::size_t i = 0; i < mag.size(); ++i) {
        mag[i] = static_cast<T>(std::hypot(c[2 * i], c[2 * i + 1]));
    }
    const std::size_t len = audio.numel();
    auto spec = std::make_shared<std::vector<double>>(std::move(c));
    return detail::make_result<T>(
        {frames, bins}, std::move(mag), {audio}, [spec, frames, bins, fft_size, hop, len](detail::TensorNode<T> & out) {
            auto & in = out.inputs[0];
            if (!in || !in->requires_grad) {
                return;
            }
            auto & g = in->ensure_grad();
            const auto win = hann_periodic(fft_size);
            const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(fft_size / 2);
            std::lock_guard<std::mutex> lock(fft_mutex());
            auto & p = plan_for(fft_size);
            for (std::size_t f = 0; f < frames; ++f) {
                // d|X_k| / dRe = Re/|X|, / dIm = Im/|X|; zero at |X| == 0
                for (std::size_t k = 0; k < bins; ++k) {
                    const double re = (*spec)[(f * bins + k) * 2];
                    const double im = (*spec)[(f * bins + k) * 2 + 1];
                    const double mag = std::hypot(re, im);
                    const double go = static_cast<double>(out.grad[f * bins + k]);
                    double a = 0.0, b = 0.0;
                    if (mag > 0.0) {
                        a = go * re / mag;
                        b = go * im / mag;
                    }
                    // Im X_k = -sum x sin, so the windowed-frame gradient is
                    // sum_k a_k cos - b_k sin == c2r of (a + ib), with c2r
                    // doubling the interior bins.
                    const double half = (k == 0 || k == bins - 1) ? 1.0 : 0.5;
                    p.spec[k][0] = a * half;
                    p.spec[k][1] = b * half;
                }
                fftw_execute(p.inverse);
                const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(f * hop) - pad;
                for (std::size_t n = 0; n < fft_size; ++n) {
                    const std::ptrdiff_t dst = start + static_cast<std::ptrdiff_t>(n);
                    if (dst >= 0 && dst < static_cast<std::ptrdiff_t>(len)) {
                        g[dst] += static_cast<T>(win[n] * p.real[n]);
                    }
                }
            }
        });
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_filterbank(const MelConfig & cfg) {
    if (!(cfg.f_min < cfg.f_max) || cfg.f_max > static_cast<double>(cfg.sample_rate) / 2.0 || cfg.f_min < 0.0) {
        throw ConfigError("mel: need 0 <= f_min < f_max <= sample_rate/2");
    }
    if (cfg.n_mels < 1 || !is_pow2(cfg.fft_size)) {
        throw ConfigError("mel: n_mels >= 1 and power-of-two fft_size required");
    }
    const std::size_t bins = cfg.fft_size / 2 + 1;
    const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.f_max);
    std::vector<double> edges(cfg.n_mels + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
    }
    std::vector<double> fb(cfg.n_mels * bins, 0.0);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
        const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
        double row = 0.0;
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * static_cast<double>(cfg.sample_rate) /
                             static_cast<double>(cfg.fft_size);
            const double up = (f - left) / (center - left);
            const double down = (right - f) / (right - center);
            const double w = std::max(0.0, std::min(up, down));
            fb[m * bins + k] = w;
            row += w;
        }
        if (!(row > 0.0)) {
            throw ConfigError("mel: filter " + std::to_string(m) + " covers no FFT bin; lower n_mels or raise fft_size");
        }
    }
    return fb;
}

template <typename T>
std::vector<T> mel_spectrogram(std::span<const T> audio, const MelConfig & cfg, std::size_t * frames_out) {
    const auto fb = mel_filterbank(cfg);
    std::size_t frames = 0;
    const auto mag = stft_magnitude(audio, cfg.fft_size, cfg.hop, &frames);
    const std::size_t bins = cfg.fft_size / 2 + 1;
    std::vector<T> out(frames * cfg.n_mels);
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t m = 0; m < cfg.n_mels; ++m) {
            double acc = 0.0;
            for (std::size_t k = 0; k < bins; ++k) {
                acc += fb[m * bins + k] * static_cast<double>(mag[f * bins + k]);
            }
            out[f * cfg.n_mels + m] = static_cast<T>(std::log(std::max(acc, cfg.log_floor)));
        }
    }
    if (frames_out) {
        *frames_out = frames;
    }
    return out;
}

template <typename T>
Tensor<T> mel_spectrogram_op(const Tensor<T> & audio, const MelConfig & cfg) {
    const auto fb = mel_filterbank(cfg);
    const std::size_t bins = cfg.fft_size / 2 + 1;
    Tensor<T> fbt({cfg.n_mels, bins}, std::vector<T>(fb.begin(), fb.end()));
    auto mag = stft_magnitude_op(audio, cfg.fft_size, cfg.hop);
    auto mel = ops::linear(mag, fbt, Tensor<T>());
    return ops::log(ops::clamp_min(mel, static_cast<T>(cfg.log_floor)));
}

#define SC2_INSTANTIATE_DSP(T)                                                                                     \
    template void mdct_frame<T>(const T *, const MdctBasis &, T *);                                                \
    template void imdct_frame<T>(const T *, const MdctBasis &, double *);                                          \
    template MdctSpectrum<T> mdct_forward<T>(std::span<const T>, const MdctConfig &);                              \
    template std::vector<T> imdct<T>(const MdctSpectrum<T> &, const MdctConfig &);                                 \
    template Tensor<T> spectrum_to_tensor<T>(const MdctSpectrum<T> &, bool);                                       \
    template MdctSpectrum<T> tensor_to_spectrum<T>(const Tensor<T> &);                                             \
    template Tensor<T> imdct_op<T>(const Tensor<T> &, const MdctConfig &);                                         \
    template std::vector<T> stft_magnitude<T>(std::span<const T>, std::size_t, std::size_t, std::size_t *);        \
    template Tensor<T> stft_magnitude_op<T>(const Tensor<T> &, std::size_t, std::size_t);                          \
    template std::vector<T> mel_spectrogram<T>(std::span<const T>, const MelConfig &, std::size_t *);              \
    template Tensor<T> mel_spectrogram_op<T>(const Tensor<T> &, const MelConfig &);

SC2_INSTANTIATE_DSP(float)
SC2_INSTANTIATE_DSP(double)

} // namespace sc2::dsp
