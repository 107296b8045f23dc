#pragma once

#include "sc2/codec_model.hpp"
#include "sc2/dsp.hpp"
#include "sc2/quantizer.hpp"

#include <span>
#include <vector>

namespace sc2 {

// Offline inference path: audio -> MDCT -> encoder -> RSVQ tokens, and
// tokens -> dequantize -> decoder -> IMDCT. L samples give
// ceil(ceil(L/hop)/downsample) tokens; T tokens decode to T*downsample*hop samples.
template <typename T>
std::vector<TokenFrame> encode_audio(const CodecModel<T> & model, const Quantizer<T> & quantizer,
                                     std::span<const T> audio);

template <typename T>
std::vector<T> decode_tokens(const CodecModel<T> & model, const Quantizer<T> & quantizer,
                             const std::vector<TokenFrame> & tokens);

std::size_t token_count(std::size_t samples, const CodecConfig & cfg, std::size_t hop = 160);

} // namespace sc2
