#pragma once

#include "sc2/codec_model.hpp"
#include "sc2/dsp.hpp"
#include "sc2/quantizer.hpp"

#include <memory>
#include <span>
#include <vector>

namespace sc2 {

namespace stream_detail {
template <typename T>
struct Pipeline;
}

// Chunked encoder. Token t is emitted once 320t + 160 samples have arrived
// (default config); finish() zero-pads a partial tail hop exactly as the
// offline transform does. Model and quantizer must outlive the encoder.
template <typename T>
class StreamEncoder {
public:
    StreamEncoder(const CodecModel<T> & model, const Quantizer<T> & quantizer);
    ~StreamEncoder();
    StreamEncoder(StreamEncoder &&) noexcept;
    StreamEncoder & operator=(StreamEncoder &&) noexcept;

    std::vector<TokenFrame> push(std::span<const T> samples);
    std::vector<TokenFrame> finish();
    void reset();

    std::size_t samples_consumed() const { return samples_; }
    std::size_t tokens_emitted() const { return tokens_; }

private:
    void run_frame(std::vector<TokenFrame> & out);

    const CodecModel<T> * model_;
    const Quantizer<T> * quantizer_;
    const dsp::MdctBasis * basis_;
    std::unique_ptr<stream_detail::Pipeline<T>> encoder_;
    std::vector<T> prev_hop_, cur_hop_;
    std::size_t fill_ = 0;
    std::size_t samples_ = 0;
    std::size_t tokens_ = 0;
    bool finished_ = false;
};

// Token-at-a-time decoder. After token t (t >= 1) the samples
// [320(t-1), 320t) are emitted; finish() releases the last 320.
template <typename T>
class StreamDecoder {
public:
    StreamDecoder(const CodecModel<T> & model, const Quantizer<T> & quantizer);
    ~StreamDecoder();
    StreamDecoder(StreamDecoder &&) noexcept;
    StreamDecoder & operator=(StreamDecoder &&) noexcept;

    std::vector<T> push(std::span<const TokenFrame> tokens);
    std::vector<T> finish();
    void reset();

    std::size_t tokens_consumed() const { return tokens_; }
    std::size_t samples_emitted() const { return emitted_; }

private:
    void add_spectral_frame(const std::vector<T> & frame);

    const CodecModel<T> * model_;
    const Quantizer<T> * quantizer_;
    const dsp::MdctBasis * basis_;
    std::unique_ptr<stream_detail::Pipeline<T>> decoder_;
    std::vector<double> tail_; // second half of the latest IMDCT frame
    std::vector<T> ready_;     // completed hops not yet released
    std::size_t frames_ = 0;
    std::size_t tokens_ = 0;
    std::size_t emitted_ = 0;
    bool finished_ = false;
};

struct LatencyReport {
    std::size_t frame_latency_samples = 0;
    double frame_latency_ms = 0;
    // input samples consumed before the response to an impulse at sample p
    // is emitted, minus p; maximum over the probe positions
    std::size_t first_output_delay_samples = 0;
    double first_output_delay_ms = 0;
    std::size_t encoder_priming_samples = 0; // samples before the first token
    std::vector<std::size_t> probe_positions;
};

template <typename T>
LatencyReport measure_latency(const CodecModel<T> & model, const Quantizer<T> & quantizer);

} // namespace sc2
