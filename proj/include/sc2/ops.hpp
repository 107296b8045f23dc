#pragma once

#include "sc2/tensor.hpp"

#include <cstddef>
#include <vector>

namespace sc2::ops {

enum class Padding {
    causal,   // all K-1 pad frames on the left
    centered, // floor((K-1)/2) on the left, the rest on the right
};

// elementwise, identical shapes
template <typename T> Tensor<T> add(const Tensor<T> & a, const Tensor<T> & b);
template <typename T> Tensor<T> sub(const Tensor<T> & a, const Tensor<T> & b);
template <typename T> Tensor<T> mul(const Tensor<T> & a, const Tensor<T> & b);
template <typename T> Tensor<T> scale(const Tensor<T> & a, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T> & a, T s);

template <typename T> Tensor<T> abs(const Tensor<T> & a);
template <typename T> Tensor<T> square(const Tensor<T> & a);
template <typename T> Tensor<T> log(const Tensor<T> & a);
template <typename T> Tensor<T> tanh(const Tensor<T> & a);
template <typename T> Tensor<T> gelu(const Tensor<T> & a);
template <typename T> Tensor<T> leaky_relu(const Tensor<T> & a, T slope);
template <typename T> Tensor<T> clamp_min(const Tensor<T> & a, T floor);

// reductions to a scalar
template <typename T> Tensor<T> sum(const Tensor<T> & a);
template <typename T> Tensor<T> mean(const Tensor<T> & a);
// sqrt(sum(a^2)); gradient is zero at the origin
template <typename T> Tensor<T> frobenius_norm(const Tensor<T> & a);

// Sum of scalars in list order.
template <typename T> Tensor<T> add_n(const std::vector<Tensor<T>> & terms);

template <typename T> Tensor<T> transpose(const Tensor<T> & a);
template <typename T> Tensor<T> reshape(const Tensor<T> & a, Shape shape);

// a[m x k] * b[k x n]
template <typename T> Tensor<T> matmul(const Tensor<T> & a, const Tensor<T> & b);

// input[F x S], weight[T x S], optional bias[T] -> [F x T]
template <typename T> Tensor<T> linear(const Tensor<T> & input, const Tensor<T> & weight, const Tensor<T> & bias);

// input[C_in x F], kernel[C_out x C_in/groups x K], optional bias[C_out]
// -> [C_out x ceil(F/stride)]. Output frame t reads padded frames
// [t*stride, t*stride + K); with causal padding it depends on input frames
// <= t*stride only.
template <typename T>
Tensor<T> conv1d(const Tensor<T> & input, const Tensor<T> & kernel, const Tensor<T> & bias, std::size_t stride,
                 std::size_t groups, Padding padding);

template <typename T>
Tensor<T> causal_conv1d(const Tensor<T> & input, const Tensor<T> & kernel, const Tensor<T> & bias,
                        std::size_t stride = 1, std::size_t groups = 1) {
    return conv1d(input, kernel, bias, stride, groups, Padding::causal);
}

// input[C_in x F], kernel[C_in x C_out x K], optional bias[C_out]
// -> [C_out x F*stride]. Causal: output frame j depends on input frames
// <= floor(j/stride); the overlap tail past F*stride is discarded.
// Centered: the kernel is shifted by (K-stride)/2 frames.
template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T> & input, const Tensor<T> & kernel, const Tensor<T> & bias,
                           std::size_t stride, Padding padding);

template <typename T>
Tensor<T> transposed_causal_conv1d(const Tensor<T> & input, const Tensor<T> & kernel, const Tensor<T> & bias,
                                   std::size_t stride) {
    return conv_transpose1d(input, kernel, bias, stride, Padding::causal);
}

// Per-phase [c_out][c_in*taps] rearrangement of a [c_in][c_out][k] kernel.
template <typename T>
std::vector<std::vector<T>> transpose_phase_weights(const T * w, std::size_t c_in, std::size_t c_out, std::size_t k,
                                                    std::size_t stride, std::size_t pad);

// input[C_in x H x W], kernel[C_out x C_in x KH x KW], bias[C_out]; zero padding
template <typename T>
Tensor<T> conv2d(const Tensor<T> & input, const Tensor<T> & kernel, const Tensor<T> & bias, std::size_t stride_h,
                 std::size_t stride_w, std::size_t pad_h, std::size_t pad_w);

// per-row normalization over the last axis of input[F x C]
template <typename T>
Tensor<T> layer_norm(const Tensor<T> & input, const Tensor<T> & gamma, const Tensor<T> & beta, T eps = T(1e-6));

enum class GrnMode {
    cumulative, // norms over frames 0..f for output frame f
    global,     // norms over all frames
};

// Global response normalization on input[F x C]:
// G[c] = ||x[:,c]||_2, N = G / (mean_c G + eps), y = gamma*(x*N) + beta + x
template <typename T>
Tensor<T> grn(const Tensor<T> & input, const Tensor<T> & gamma, const Tensor<T> & beta, GrnMode mode,
              T eps = T(1e-6));

// value == `values`, gradient passed unchanged to `input`
template <typename T> Tensor<T> straight_through(const Tensor<T> & input, const std::vector<T> & values);

// rows of table[N x D] selected by indices -> [n x D]; gradient scatters back
template <typename T> Tensor<T> gather_rows(const Tensor<T> & table, const std::vector<std::size_t> & indices);

template <typename T> Tensor<T> detach(const Tensor<T> & a) { return a.detach(); }

// mean(|a - b|)
template <typename T> Tensor<T> mean_abs_error(const Tensor<T> & a, const Tensor<T> & b);

} // namespace sc2::ops
