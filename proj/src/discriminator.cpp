#include "sc2/discriminator.hpp"

#include "sc2/dsp.hpp"
#include "sc2/error.hpp"
#include "sc2/ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sc2 {

template <typename T>
std::vector<Tensor<T>> Discriminator<T>::parameters() const {
    std::vector<Tensor<T>> out;
    for (const auto & s : subs) {
        for (const auto & l : s.layers) {
            out.push_back(l.weight);
            out.push_back(l.bias);
        }
        out.push_back(s.logits.weight);
        out.push_back(s.logits.bias);
    }
    return out;
}

template <typename T>
Discriminator<T> build_discriminator(const DiscriminatorConfig & cfg, std::uint64_t seed) {
    if (cfg.fft_sizes.empty() || cfg.strides.empty() || cfg.channels == 0) {
        throw ConfigError("discriminator needs at least one sub, one layer and one channel");
    }
    std::mt19937_64 rng(seed);
    auto layer = [&](std::size_t cin, std::size_t cout, std::size_t st, std::size_t sf) {
        std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(cin * 9)));
        std::vector<T> w(cout * cin * 9);
        for (auto & x : w) {
            x = static_cast<T>(nd(rng));
        }
        return ConvLayer2d<T>{Tensor<T>({cout, cin, 3, 3}, std::move(w), true), Tensor<T>::zeros({cout}, true), st,
                              sf};
    };
    Discriminator<T> d;
    d.config = cfg;
    for (auto n : cfg.fft_sizes) {
        SubDiscriminator<T> s;
        s.fft_size = n;
        s.hop = n / 4;
        std::size_t cin = 1;
        for (const auto & st : cfg.strides) {
            s.layers.push_back(layer(cin, cfg.channels, st[0], st[1]));
            cin = cfg.channels;
        }
        s.logits = layer(cin, 1, 1, 1);
        d.subs.push_back(std::move(s));
    }
    return d;
}

std::array<std::size_t, 2> logits_shape(const DiscriminatorConfig & cfg, std::size_t fft_size, std::size_t samples) {
    std::size_t h = dsp::stft_frame_count(samples, fft_size / 4);
    std::size_t w = fft_size / 2 + 1;
    // 3x3, pad 1: out = (in - 1) / stride + 1
    for (const auto & st : cfg.strides) {
        h = (h - 1) / st[0] + 1;
        w = (w - 1) / st[1] + 1;
    }
    return {h, w};
}

template <typename T>
DiscriminatorOutput<T> discriminator_forward(const Discriminator<T> & disc, const Tensor<T> & audio) {
    if (audio.rank() != 1) {
        throw DimensionError("discriminator expects 1-D audio, got " + shape_str(audio.shape()));
    }
    const std::size_t longest = *std::max_element(disc.config.fft_sizes.begin(), disc.config.fft_sizes.end());
    if (audio.numel() < longest) {
        throw ContractError("discriminator input of " + std::to_string(audio.numel()) +
                            " samples is shorter than the largest window (" + std::to_string(longest) + ")");
    }
    const T slope = static_cast<T>(disc.config.leaky_slope);
    DiscriminatorOutput<T> out;
    for (const auto & s : disc.subs) {
        auto mag = dsp::stft_magnitude_op(audio, s.fft_size, s.hop);
        auto h = ops::log(ops::add_scalar(mag, T(1)));
        h = ops::reshape(h, {1, h.dim(0), h.dim(1)});
        std::vector<Tensor<T>> feats;
        for (const auto & l : s.layers) {
            h = ops::leaky_relu(ops::conv2d(h, l.weight, l.bias, l.stride_t, l.stride_f, 1, 1), slope);
            feats.push_back(h);
        }
        out.logits.push_back(ops::conv2d(h, s.logits.weight, s.logits.bias, 1, 1, 1, 1));
        out.features.push_back(std::move(feats));
    }
    return out;
}

template <typename T>
AdversarialLosses<T> adversarial_losses(const DiscriminatorOutput<T> & ref, const DiscriminatorOutput<T> & hat) {
    if (ref.logits.size() != hat.logits.size() || ref.logits.empty()) {
        throw DimensionError("adversarial_losses: mismatched discriminator outputs");
    }
    const T inv_subs = T(1) / static_cast<T>(ref.logits.size());
    std::vector<Tensor<T>> gen, dis, fm;
    for (std::size_t s = 0; s < ref.logits.size(); ++s) {
        gen.push_back(ops::mean(ops::square(ops::add_scalar(hat.logits[s], T(-1)))));
        dis.push_back(ops::mean(ops::square(ops::add_scalar(ref.logits[s], T(-1)))));
        dis.push_back(ops::mean(ops::square(hat.logits[s])));
        for (std::size_t l = 0; l < ref.features[s].size(); ++l) {
            const auto & fr = ref.features[s][l];
            const auto & fh = hat.features[s][l];
            double scale = 0;
            for (T v : fr.data()) {
                scale += std::abs(static_cast<double>(v));
            }
            scale = scale / static_cast<double>(std::max<std::size_t>(fr.numel(), 1)) + 1e-6;
            fm.push_back(ops::scale(ops::mean_abs_error(fr.detach(), fh), static_cast<T>(1.0 / scale)));
        }
    }
    AdversarialLosses<T> r;
    r.generator = ops::scale(ops::add_n(gen), inv_subs);
    r.discriminator = ops::scale(ops::add_n(dis), inv_subs);
    r.feature_matching = fm.empty() ? Tensor<T>::scalar(T(0))
                                    : ops::scale(ops::add_n(fm), T(1) / static_cast<T>(fm.size()));
    return r;
}

template <typename T>
AdversarialLosses<T> adversarial_losses(const Discriminator<T> & disc, const Tensor<T> & audio_ref,
                                        const Tensor<T> & audio_hat) {
    if (audio_ref.shape() != audio_hat.shape()) {
        throw DimensionError("adversarial_losses: " + shape_str(audio_ref.shape()) + " vs " +
                             shape_str(audio_hat.shape()));
    }
    const auto ref = discriminator_forward(disc, audio_ref.detach());
    const auto hat = discriminator_forward(disc, audio_hat);
    return adversarial_losses(ref, hat);
}

#define SC2_DISC(T)                                                                                                   \
    template struct Discriminator<T>;                                                                                  \
    template Discriminator<T> build_discriminator<T>(const DiscriminatorConfig &, std::uint64_t);                      \
    template DiscriminatorOutput<T> discriminator_forward(const Discriminator<T> &, const Tensor<T> &);                \
    template AdversarialLosses<T> adversarial_losses(const DiscriminatorOutput<T> &, const DiscriminatorOutput<T> &);  \
    template AdversarialLosses<T> adversarial_losses(const Discriminator<T> &, const Tensor<T> &, const Tensor<T> &);

SC2_DISC(float)
SC2_DISC(double)

} // namespace sc2
