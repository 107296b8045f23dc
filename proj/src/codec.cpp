#include "sc2/codec.hpp"

#include "sc2/error.hpp"

namespace sc2 {

std::size_t token_count(std::size_t samples, const CodecConfig & cfg, std::size_t hop) {
    const std::size_t frames = dsp::mdct_frame_count(samples, hop);
    return (frames + cfg.downsample_factor - 1) / cfg.downsample_factor;
}

template <typename T>
std::vector<TokenFrame> encode_audio(const CodecModel<T> & model, const Quantizer<T> & quantizer,
                                     std::span<const T> audio) {
    if (quantizer.config.latent_dim != model.config.latent_dim) {
        throw DimensionError("quantizer and model latent widths differ");
    }
    if (audio.empty()) {
        return {};
    }
    NoGradGuard ng;
    const auto cfg = dsp::make_mdct_config(model.config.mdct_bins, model.config.sample_rate);
    const auto spec = dsp::spectrum_to_tensor(dsp::mdct_forward(audio, cfg));
    const auto latent = encode(model, spec);
    auto q = quantizer; // inference mode leaves usage untouched; the copy keeps the interface const
    return rsvq_forward(q, latent, QuantMode::inference).tokens;
}

template <typename T>
std::vector<T> decode_tokens(const CodecModel<T> & model, const Quantizer<T> & quantizer,
                             const std::vector<TokenFrame> & tokens) {
    if (tokens.empty()) {
        return {};
    }
    NoGradGuard ng;
    const auto cfg = dsp::make_mdct_config(model.config.mdct_bins, model.config.sample_rate);
    const auto spec = decode(model, dequantize(quantizer, tokens));
    return dsp::imdct(dsp::tensor_to_spectrum(spec), cfg);
}

template std::vector<TokenFrame> encode_audio(const CodecModel<float> &, const Quantizer<float> &,
                                              std::span<const float>);
template std::vector<TokenFrame> encode_audio(const CodecModel<double> &, const Quantizer<double> &,
                                              std::span<const double>);
template std::vector<float> decode_tokens(const CodecModel<float> &, const Quantizer<float> &,
                                          const std::vector<TokenFrame> &);
template std::vector<double> decode_tokens(const CodecModel<double> &, const Quantizer<double> &,
                                           const std::vector<TokenFrame> &);

} // namespace sc2
