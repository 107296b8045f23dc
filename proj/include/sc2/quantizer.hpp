#pragma once

#include "sc2/tensor.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace sc2 {

struct QuantizerConfig {
    std::size_t latent_dim = 64;
    std::size_t sq_dims = 7;
    std::size_t sq_levels = 4;
    std::size_t codebook_size = 1024;
    std::size_t vq_stages = 2;
    double ema_decay = 0.99;
    double refresh_ratio = 0.01; // dead below refresh_ratio / codebook_size
    std::size_t refresh_interval = 200;
    std::size_t kmeans_iters = 10;
    double refresh_noise = 1e-4;

    std::size_t sq_bits() const;
    std::size_t vq_bits() const;
    std::size_t bits_per_frame() const { return sq_bits() + vq_stages * vq_bits(); }
    double refresh_threshold() const { return refresh_ratio / static_cast<double>(codebook_size); }
    void validate() const;
};

struct TokenFrame {
    std::array<std::uint8_t, 7> sq{};
    std::uint16_t vq1 = 0;
    std::uint16_t vq2 = 0;

    bool operator==(const TokenFrame &) const = default;
};

template <typename T>
struct IvqCodebook {
    Tensor<T> entries;        // [codebook_size x latent_dim]
    std::vector<double> usage; // EMA of assignment fractions
};

template <typename T>
struct Quantizer {
    QuantizerConfig config;
    Tensor<T> down_w; // [sq_dims x latent_dim]
    Tensor<T> down_b;
    Tensor<T> up_w; // [latent_dim x sq_dims]
    Tensor<T> up_b;
    std::vector<IvqCodebook<T>> stages;

    std::vector<Tensor<T>> parameters() const;
    // projections only (codebooks excluded)
    std::vector<Tensor<T>> projection_parameters() const;
    std::vector<Tensor<T>> codebook_parameters() const;
};

template <typename T = float>
Quantizer<T> build_quantizer(const QuantizerConfig & cfg, std::uint64_t seed);

template <typename To, typename From>
Quantizer<To> cast_quantizer(const Quantizer<From> & q);

enum class QuantMode {
    training,  // rounding with straight-through, stop-gradients, usage EMA update
    inference, // values and tokens only
    surrogate, // no rounding and no stop-gradients; smooth for finite differences
};

template <typename T>
struct RsvqOutput {
    Tensor<T> quantized; // [latent_dim x F]
    std::vector<TokenFrame> tokens;
    Tensor<T> codebook_loss;
    Tensor<T> commitment_loss;
    // residuals entering each VQ stage, frames x latent_dim (values only)
    std::vector<std::vector<T>> stage_inputs;
    std::vector<std::vector<std::size_t>> indices;
};

// Scalar quantizer index rule on v in [-1, 1].
std::size_t sq_index(double v, std::size_t levels);
double sq_level(std::size_t index, std::size_t levels);

// Per-frame SQ: symbols and dequantized latent_dim vector.
template <typename T>
void sq_quantize(const Quantizer<T> & q, const T * latent_frame, std::uint8_t * symbols, T * dequant);

// argmin squared distance, lowest index on ties
template <typename T>
std::size_t ivq_quantize(const IvqCodebook<T> & cb, const T * residual, std::size_t dim, T * code = nullptr);

// latent [latent_dim x F]. fixed_indices (per stage, per frame) replaces the
// nearest-entry search; gradient checks use it so a perturbation cannot move
// a frame to another codeword.
template <typename T>
RsvqOutput<T> rsvq_forward(Quantizer<T> & q, const Tensor<T> & latent, QuantMode mode,
                           const std::vector<std::vector<std::size_t>> * fixed_indices = nullptr);

// Rebuilds the quantized latent [latent_dim x F] from tokens; bit-identical to
// rsvq_forward's value.
template <typename T>
Tensor<T> dequantize(const Quantizer<T> & q, const std::vector<TokenFrame> & tokens);

// One frame of dequantize, latent_dim outputs.
template <typename T>
void dequantize_frame(const Quantizer<T> & q, const TokenFrame & tok, T * out);

// Re-seeds entries whose usage EMA is below the threshold from k-means
// centroids of `residuals` (rows x dim). Returns the number replaced.
template <typename T>
std::size_t codebook_refresh(IvqCodebook<T> & cb, const std::vector<T> & residuals, std::size_t rows,
                             const QuantizerConfig & cfg, std::uint64_t seed);

// exp(entropy) of the assignment histogram
double perplexity(const std::vector<std::size_t> & indices, std::size_t codebook_size);

void validate_token(const TokenFrame & t, const QuantizerConfig & cfg);

} // namespace sc2
