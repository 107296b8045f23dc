#pragma once

#include "sc2/tensor.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace sc2 {

struct DiscriminatorConfig {
    std::vector<std::size_t> fft_sizes{512, 1024, 2048}; // hop = fft / 4
    std::size_t channels = 32;
    double leaky_slope = 0.2;
    // (time, frequency) stride per 3x3 layer, padding 1
    std::vector<std::array<std::size_t, 2>> strides{{1, 2}, {2, 2}, {2, 2}, {1, 1}};
};

template <typename T>
struct ConvLayer2d {
    Tensor<T> weight; // [C_out x C_in x 3 x 3]
    Tensor<T> bias;
    std::size_t stride_t = 1, stride_f = 1;
};

template <typename T>
struct SubDiscriminator {
    std::size_t fft_size = 0, hop = 0;
    std::vector<ConvLayer2d<T>> layers;
    ConvLayer2d<T> logits;
};

template <typename T>
struct Discriminator {
    DiscriminatorConfig config;
    std::vector<SubDiscriminator<T>> subs;

    std::vector<Tensor<T>> parameters() const;
};

// weights ~ N(0, 1/fan_in), zero biases
template <typename T = float>
Discriminator<T> build_discriminator(const DiscriminatorConfig & cfg, std::uint64_t seed);

template <typename T>
struct DiscriminatorOutput {
    std::vector<Tensor<T>> logits;                // per sub, [1 x H x W]
    std::vector<std::vector<Tensor<T>>> features; // per sub, per layer
};

// Input map per sub is log1p|STFT| shaped [1 x frames x bins].
template <typename T>
DiscriminatorOutput<T> discriminator_forward(const Discriminator<T> & disc, const Tensor<T> & audio);

// Logits map size for a sub at fft size n and `samples` input samples: {H, W}.
std::array<std::size_t, 2> logits_shape(const DiscriminatorConfig & cfg, std::size_t fft_size, std::size_t samples);

template <typename T>
struct AdversarialLosses {
    Tensor<T> generator;     // mean over subs of mean (D(hat) - 1)^2
    Tensor<T> discriminator; // mean over subs of mean (D(ref) - 1)^2 + mean D(hat)^2
    Tensor<T> feature_matching;
};

// Losses from precomputed outputs; `ref` should come from detached reference audio.
template <typename T>
AdversarialLosses<T> adversarial_losses(const DiscriminatorOutput<T> & ref, const DiscriminatorOutput<T> & hat);

template <typename T>
AdversarialLosses<T> adversarial_losses(const Discriminator<T> & disc, const Tensor<T> & audio_ref,
                                        const Tensor<T> & audio_hat);

} // namespace sc2
