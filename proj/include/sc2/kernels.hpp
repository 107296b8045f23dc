#pragma once

// Per-frame compute kernels. The offline tensor ops and the streaming runtime
// both route every output element through these functions, so their results
// are bit-identical for the same inputs. Summation order inside a kernel
// depends only on the reduction length, never on the number of frames.

#include <cmath>
#include <cstddef>
#include <cstdint>

namespace sc2::kernels {

// Dot product with eight interleaved partial sums combined pairwise.
template <typename T>
inline T dot(const T * a, const T * b, std::size_t n) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 += a[i + 0] * b[i + 0];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        s4 += a[i + 4] * b[i + 4];
        s5 += a[i + 5] * b[i + 5];
        s6 += a[i + 6] * b[i + 6];
        s7 += a[i + 7] * b[i + 7];
    }
    T tail = 0;
    for (; i < n; ++i) {
        tail += a[i] * b[i];
    }
    return (((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))) + tail;
}

// y[t] = bias[t] + sum_s x[s] * w[t*in + s]
template <typename T>
inline void linear_row(const T * x, const T * w, const T * bias, std::size_t in, std::size_t out, T * y) {
    for (std::size_t t = 0; t < out; ++t) {
        T acc = dot(x, w + t * in, in);
        y[t] = bias ? bias[t] + acc : acc;
    }
}

// Grouped 1-D convolution for one output frame. `col` holds the receptive
// field laid out [c_in][k] (zeros where the window runs off the signal);
// weights are [c_out][c_in/groups][k].
template <typename T>
inline void conv1d_frame(const T * col, const T * w, const T * bias, std::size_t c_in, std::size_t c_out,
                         std::size_t k, std::size_t groups, T * y) {
    const std::size_t cig = c_in / groups;
    const std::size_t cog = c_out / groups;
    const std::size_t span = cig * k;
    for (std::size_t co = 0; co < c_out; ++co) {
        const std::size_t g = co / cog;
        T acc = dot(w + co * span, col + g * span, span);
        y[co] = bias ? bias[co] + acc : acc;
    }
}

// Transposed convolution for one output frame. `col` is [c_in][taps] input
// values for this output's phase; `wphase` is the matching [c_out][c_in*taps]
// rearranged weight matrix.
template <typename T>
inline void conv_transpose1d_frame(const T * col, const T * wphase, const T * bias, std::size_t c_in,
                                   std::size_t c_out, std::size_t taps, T * y) {
    const std::size_t span = c_in * taps;
    for (std::size_t co = 0; co < c_out; ++co) {
        T acc = dot(wphase + co * span, col, span);
        y[co] = bias ? bias[co] + acc : acc;
    }
}

// Index arithmetic of a transposed convolution (kernel k, stride, left shift
// pad): output j receives input frame source(j, m) through kernel tap
// tap(j, m), m in [0, taps).
struct TransposeGeometry {
    std::size_t stride;
    std::size_t k;
    std::size_t pad;
    std::size_t taps; // ceil(k / stride)

    std::size_t tap(std::size_t j, std::size_t m) const { return (j + pad) % stride + m * stride; }
    std::ptrdiff_t source(std::size_t j, std::size_t m) const {
        return (static_cast<std::ptrdiff_t>(j + pad) - static_cast<std::ptrdiff_t>(tap(j, m))) /
               static_cast<std::ptrdiff_t>(stride);
    }
    bool valid(std::size_t j, std::size_t m, std::size_t frames) const {
        const std::ptrdiff_t i = source(j, m);
        return tap(j, m) < k && j + pad >= tap(j, m) && i >= 0 && i < static_cast<std::ptrdiff_t>(frames);
    }
};

// Population mean/variance normalization of one row, then affine.
template <typename T>
inline void layer_norm_row(const T * x, const T * gamma, const T * beta, std::size_t c, T eps, T * y,
                           T * mean_out = nullptr, T * rstd_out = nullptr) {
    T sum = 0;
    for (std::size_t i = 0; i < c; ++i) {
        sum += x[i];
    }
    const T mean = sum / static_cast<T>(c);
    T var = 0;
    for (std::size_t i = 0; i < c; ++i) {
        const T d = x[i] - mean;
        var += d * d;
    }
    var /= static_cast<T>(c);
    const T rstd = T(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < c; ++i) {
        y[i] = (x[i] - mean) * rstd * gamma[i] + beta[i];
    }
    if (mean_out) {
        *mean_out = mean;
    }
    if (rstd_out) {
        *rstd_out = rstd;
    }
}

template <typename T>
inline T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <typename T>
inline T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(0.39894228040143267794);
    return cdf + x * pdf;
}

// Global response normalization of one row given per-channel sums of squares
// accumulated over the frames that define the norm. Writes the per-channel
// normalizer into `nrm` when provided.
template <typename T>
inline void grn_row(const T * x, const T * sumsq, const T * gamma, const T * beta, std::size_t c, T eps, T * y,
                    T * nrm = nullptr, T * g_out = nullptr, T * mean_out = nullptr) {
    T mean = 0;
    for (std::size_t i = 0; i < c; ++i) {
        mean += std::sqrt(sumsq[i]);
    }
    mean /= static_cast<T>(c);
    const T denom = mean + eps;
    for (std::size_t i = 0; i < c; ++i) {
        const T g = std::sqrt(sumsq[i]);
        const T n = g / denom;
        y[i] = gamma[i] * (x[i] * n) + beta[i] + x[i];
        if (nrm) {
            nrm[i] = n;
        }
        if (g_out) {
            g_out[i] = g;
        }
    }
    if (mean_out) {
        *mean_out = mean;
    }
}

// Index of the first row of `table` (rows x dim) nearest to `v` in squared
// Euclidean distance.
template <typename T>
inline std::size_t nearest_row(const T * v, const T * table, std::size_t rows, std::size_t dim) {
    std::size_t best = 0;
    T best_d = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        const T * e = table + r * dim;
        T d = 0;
        for (std::size_t i = 0; i < dim; ++i) {
            const T diff = v[i] - e[i];
            d += diff * diff;
        }
        if (r == 0 || d < best_d) {
            best = r;
            best_d = d;
        }
    }
    return best;
}

} // namespace sc2::kernels
