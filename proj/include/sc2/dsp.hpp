#pragma once

#include "sc2/tensor.hpp"

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace sc2::dsp {

struct MdctConfig {
    std::size_t hop = 160;
    std::size_t sample_rate = 16000;
    std::vector<double> window; // sine, length 2*hop

    std::size_t window_length() const { return 2 * hop; }
};

MdctConfig make_mdct_config(std::size_t hop = 160, std::size_t sample_rate = 16000);

// Orthonormal lapped basis: basis(k, n) = sqrt(2/M) w[n] cos(pi/M (n + 1/2 + M/2)(k + 1/2)).
class MdctBasis {
public:
    explicit MdctBasis(const MdctConfig & cfg);
    std::size_t hop() const { return hop_; }
    const double * row(std::size_t k) const { return table_.data() + k * 2 * hop_; }
    // column-major copy for synthesis: col(n)[k] == row(k)[n]
    const double * col(std::size_t n) const { return transposed_.data() + n * hop_; }

private:
    std::size_t hop_;
    std::vector<double> table_;
    std::vector<double> transposed_;
};

// cached per hop; returned reference stays valid for the process lifetime
const MdctBasis & basis_for(const MdctConfig & cfg);

// One analysis frame from 2M consecutive samples (zero where the caller pads).
template <typename T>
void mdct_frame(const T * segment, const MdctBasis & basis, T * coefs);

// Windowed inverse of one frame: 2M samples to be overlap-added.
template <typename T>
void imdct_frame(const T * coefs, const MdctBasis & basis, double * out);

// frames x bins, row-major
template <typename T>
struct MdctSpectrum {
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::vector<T> coefficients;

    T at(std::size_t f, std::size_t k) const { return coefficients[f * bins + k]; }
};

// Number of analysis frames for `samples` input samples: ceil(samples / hop).
std::size_t mdct_frame_count(std::size_t samples, std::size_t hop);

// Frame f covers samples [(f-1)M, (f+1)M), zeros outside the signal.
template <typename T>
MdctSpectrum<T> mdct_forward(std::span<const T> audio, const MdctConfig & cfg);

// Overlap-add synthesis; output has frames * hop samples. Samples from hop
// 1 through frames-2 reconstruct the analysed signal exactly.
template <typename T>
std::vector<T> imdct(const MdctSpectrum<T> & spec, const MdctConfig & cfg);

// Spectrum as a [bins x frames] tensor (channels first, the model layout).
template <typename T>
Tensor<T> spectrum_to_tensor(const MdctSpectrum<T> & spec, bool requires_grad = false);
template <typename T>
MdctSpectrum<T> tensor_to_spectrum(const Tensor<T> & t);

// Differentiable synthesis of a [bins x frames] tensor -> [frames*hop].
template <typename T>
Tensor<T> imdct_op(const Tensor<T> & coefs, const MdctConfig & cfg);

// Periodic Hann window of length n.
std::vector<double> hann_periodic(std::size_t n);

// |STFT| with a periodic Hann window and fft_size/2 zeros of center padding
// on both sides. Returns [frames x (fft_size/2 + 1)], frames = len/hop + 1.
template <typename T>
std::vector<T> stft_magnitude(std::span<const T> audio, std::size_t fft_size, std::size_t hop,
                              std::size_t * frames_out = nullptr);

std::size_t stft_frame_count(std::size_t samples, std::size_t hop);

// Differentiable version on a 1-D audio tensor -> [frames x bins].
template <typename T>
Tensor<T> stft_magnitude_op(const Tensor<T> & audio, std::size_t fft_size, std::size_t hop);

struct MelConfig {
    std::size_t sample_rate = 16000;
    std::size_t fft_size = 1024;
    std::size_t hop = 256;
    std::size_t n_mels = 80;
    double f_min = 0.0;
    double f_max = 8000.0;
    double log_floor = 1e-5;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular HTK-scale filterbank, [n_mels x (fft_size/2 + 1)].
std::vector<double> mel_filterbank(const MelConfig & cfg);

// log(max(fb * |STFT|, floor)) as [frames x n_mels].
template <typename T>
std::vector<T> mel_spectrogram(std::span<const T> audio, const MelConfig & cfg, std::size_t * frames_out = nullptr);

template <typename T>
Tensor<T> mel_spectrogram_op(const Tensor<T> & audio, const MelConfig & cfg);

} // namespace sc2::dsp
