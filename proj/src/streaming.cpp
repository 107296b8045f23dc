#include "sc2/streaming.hpp"

#include "sc2/error.hpp"
#include "sc2/kernels.hpp"
#include "sc2/ops.hpp"

#include <algorithm>
#include <deque>

namespace sc2 {

namespace stream_detail {

template <typename T>
using Frame = std::vector<T>;

template <typename T>
struct Stage {
    virtual ~Stage() = default;
    virtual void push(const Frame<T> & in, std::vector<Frame<T>> & out) = 0;
    virtual void reset() = 0;
};

// Causal conv: output t reads input frames t*stride-(k-1) .. t*stride.
template <typename T>
struct ConvStage final : Stage<T> {
    const Tensor<T> * weight;
    const Tensor<T> * bias;
    std::size_t c_in, c_out, k, stride, groups;
    std::deque<Frame<T>> window;
    std::size_t seen = 0;
    std::vector<T> col;

    ConvStage(const Tensor<T> & w, const Tensor<T> & b, std::size_t c_in_, std::size_t stride_, std::size_t groups_)
        : weight(&w), bias(&b), c_in(c_in_), c_out(w.dim(0)), k(w.dim(2)), stride(stride_), groups(groups_),
          col(c_in_ * w.dim(2)) {
        reset();
    }

    void reset() override {
        window.assign(k - 1, Frame<T>(c_in, T(0)));
        seen = 0;
    }

    void push(const Frame<T> & in, std::vector<Frame<T>> & out) override {
        window.push_back(in);
        if (window.size() > k) {
            window.pop_front();
        }
        if (seen++ % stride != 0) {
            return;
        }
        for (std::size_t ci = 0; ci < c_in; ++ci) {
            for (std::size_t j = 0; j < k; ++j) {
                col[ci * k + j] = window[j][ci];
            }
        }
        Frame<T> y(c_out);
        kernels::conv1d_frame(col.data(), weight->data().data(), bias->data().data(), c_in, c_out, k, groups,
                              y.data());
        out.push_back(std::move(y));
    }
};

// Causal transposed conv: input frame i completes outputs [i*stride, (i+1)*stride).
template <typename T>
struct TransposeStage final : Stage<T> {
    const Tensor<T> * weight;
    const Tensor<T> * bias;
    std::size_t c_in, c_out;
    kernels::TransposeGeometry geo;
    std::vector<std::vector<T>> phases;
    std::deque<Frame<T>> window;
    std::size_t seen = 0;
    std::vector<T> col;

    TransposeStage(const Tensor<T> & w, const Tensor<T> & b, std::size_t stride)
        : weight(&w), bias(&b), c_in(w.dim(0)), c_out(w.dim(1)),
          geo{stride, w.dim(2), 0, (w.dim(2) + stride - 1) / stride}, col(w.dim(0) * geo.taps) {
        reset();
    }

    void reset() override {
        // weights are read here, so a reset picks up trained values
        phases = ops::transpose_phase_weights(weight->data().data(), c_in, c_out, geo.k, geo.stride, geo.pad);
        window.assign(geo.taps - 1, Frame<T>(c_in, T(0)));
        seen = 0;
    }

    void push(const Frame<T> & in, std::vector<Frame<T>> & out) override {
        window.push_back(in);
        if (window.size() > geo.taps) {
            window.pop_front();
        }
        const std::size_t i = seen++;
        for (std::size_t j = i * geo.stride; j < (i + 1) * geo.stride; ++j) {
            for (std::size_t m = 0; m < geo.taps; ++m) {
                const bool ok = geo.valid(j, m, i + 1);
                const std::size_t back = ok ? i - static_cast<std::size_t>(geo.source(j, m)) : 0;
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                    col[ci * geo.taps + m] = ok ? window[geo.taps - 1 - back][ci] : T(0);
                }
            }
            Frame<T> y(c_out);
            kernels::conv_transpose1d_frame(col.data(), phases[(j + geo.pad) % geo.stride].data(),
                                            bias->data().data(), c_in, c_out, geo.taps, y.data());
            out.push_back(std::move(y));
        }
    }
};

template <typename T>
struct BlockStage final : Stage<T> {
    const Module<T> * block;
    std::size_t c_l, c_h;
    ConvStage<T> dw;
    std::vector<T> sumsq;
    std::vector<T> a, b, c, d;

    BlockStage(const Module<T> & m, const CodecConfig & cfg)
        : block(&m), c_l(cfg.c_l), c_h(cfg.c_h),
          dw(m.p(block_param::dw_w), m.p(block_param::dw_b), cfg.c_l, 1, cfg.depthwise ? cfg.c_l : 1),
          sumsq(cfg.c_h, T(0)), a(cfg.c_l), b(cfg.c_h), c(cfg.c_h), d(cfg.c_l) {}

    void reset() override {
        dw.reset();
        std::fill(sumsq.begin(), sumsq.end(), T(0));
    }

    void push(const Frame<T> & in, std::vector<Frame<T>> & out) override {
        using namespace block_param;
        std::vector<Frame<T>> h;
        dw.push(in, h);
        const auto p = [&](std::size_t i) { return block->p(i).data().data(); };
        kernels::layer_norm_row(h[0].data(), p(ln_g), p(ln_b), c_l, T(1e-6), a.data());
        kernels::linear_row(a.data(), p(pw1_w), p(pw1_b), c_l, c_h, b.data());
        for (std::size_t i = 0; i < c_h; ++i) {
            b[i] = kernels::gelu(b[i]);
            sumsq[i] += b[i] * b[i];
        }
        kernels::grn_row(b.data(), sumsq.data(), p(grn_g), p(grn_b), c_h, T(1e-6), c.data());
        kernels::linear_row(c.data(), p(pw2_w), p(pw2_b), c_h, c_l, d.data());
        Frame<T> y(c_l);
        for (std::size_t i = 0; i < c_l; ++i) {
            y[i] = in[i] + d[i];
        }
        out.push_back(std::move(y));
    }
};

template <typename T>
struct Pipeline {
    std::vector<std::unique_ptr<Stage<T>>> stages;

    Pipeline(const std::vector<Module<T>> & modules, const CodecConfig & cfg) {
        for (const auto & m : modules) {
            switch (m.kind) {
            case ModuleKind::conv_in:
            case ModuleKind::conv_out:
                stages.push_back(std::make_unique<ConvStage<T>>(m.p(0), m.p(1), m.p(0).dim(1), 1, 1));
                break;
            case ModuleKind::down:
                stages.push_back(
                    std::make_unique<ConvStage<T>>(m.p(0), m.p(1), m.p(0).dim(1), cfg.downsample_factor, 1));
                break;
            case ModuleKind::up:
                stages.push_back(std::make_unique<TransposeStage<T>>(m.p(0), m.p(1), cfg.downsample_factor));
                break;
            case ModuleKind::block:
                stages.push_back(std::make_unique<BlockStage<T>>(m, cfg));
                break;
            }
        }
    }

    std::vector<Frame<T>> push(Frame<T> frame) {
        std::vector<Frame<T>> cur{std::move(frame)}, next;
        for (auto & s : stages) {
            next.clear();
            for (const auto & f : cur) {
                s->push(f, next);
            }
            std::swap(cur, next);
        }
        return cur;
    }

    void reset() {
        for (auto & s : stages) {
            s->reset();
        }
    }
};

} // namespace stream_detail

namespace {

void require_streamable(const CodecConfig & cfg) {
    if (!cfg.causal) {
        throw UnsupportedVariantError("streaming needs a causal model; '" + cfg.name + "' is non-causal");
    }
    if (!cfg.cumulative_grn) {
        throw UnsupportedVariantError("streaming needs cumulative GRN norms; '" + cfg.name + "' uses global norms");
    }
}

// Same arithmetic as the batched inference quantizer, one frame at a time.
template <typename T>
TokenFrame quantize_frame(const Quantizer<T> & q, const T * x) {
    const auto & c = q.config;
    TokenFrame tok;
    std::vector<T> q0(c.latent_dim), r(c.latent_dim), e(c.latent_dim);
    sq_quantize(q, x, tok.sq.data(), q0.data());
    for (std::size_t i = 0; i < c.latent_dim; ++i) {
        r[i] = x[i] - q0[i];
    }
    for (std::size_t s = 0; s < c.vq_stages; ++s) {
        const std::size_t idx = ivq_quantize(q.stages[s], r.data(), c.latent_dim, e.data());
        (s == 0 ? tok.vq1 : tok.vq2) = static_cast<std::uint16_t>(idx);
        for (std::size_t i = 0; i < c.latent_dim; ++i) {
            r[i] = r[i] - e[i];
        }
    }
    return tok;
}

} // namespace

template <typename T>
StreamEncoder<T>::StreamEncoder(const CodecModel<T> & model, const Quantizer<T> & quantizer)
    : model_(&model), quantizer_(&quantizer) {
    require_streamable(model.config);
    if (quantizer.config.latent_dim != model.config.latent_dim) {
        throw DimensionError("quantizer and model latent widths differ");
    }
    basis_ = &dsp::basis_for(dsp::make_mdct_config(model.config.mdct_bins, model.config.sample_rate));
    encoder_ = std::make_unique<stream_detail::Pipeline<T>>(model.encoder, model.config);
    reset();
}

template <typename T>
StreamEncoder<T>::~StreamEncoder() = default;
template <typename T>
StreamEncoder<T>::StreamEncoder(StreamEncoder &&) noexcept = default;
template <typename T>
StreamEncoder<T> & StreamEncoder<T>::operator=(StreamEncoder &&) noexcept = default;

template <typename T>
void StreamEncoder<T>::reset() {
    const std::size_t m = basis_->hop();
    prev_hop_.assign(m, T(0));
    cur_hop_.assign(m, T(0));
    fill_ = 0;
    samples_ = 0;
    tokens_ = 0;
    finished_ = false;
    encoder_->reset();
}

template <typename T>
void StreamEncoder<T>::run_frame(std::vector<TokenFrame> & out) {
    const std::size_t m = basis_->hop();
    std::vector<T> seg(2 * m), coefs(m);
    std::copy(prev_hop_.begin(), prev_hop_.end(), seg.begin());
    std::copy(cur_hop_.begin(), cur_hop_.end(), seg.begin() + m);
    dsp::mdct_frame(seg.data(), *basis_, coefs.data());
    for (const auto & lat : encoder_->push(std::move(coefs))) {
        out.push_back(quantize_frame(*quantizer_, lat.data()));
        ++tokens_;
    }
    std::swap(prev_hop_, cur_hop_);
    std::fill(cur_hop_.begin(), cur_hop_.end(), T(0));
    fill_ = 0;
}

template <typename T>
std::vector<TokenFrame> StreamEncoder<T>::push(std::span<const T> samples) {
    if (finished_ && !samples.empty()) {
        throw ContractError("stream encoder: push after finish (call reset first)");
    }
    std::vector<TokenFrame> out;
    const std::size_t m = basis_->hop();
    for (T s : samples) {
        cur_hop_[fill_++] = s;
        ++samples_;
        if (fill_ == m) {
            run_frame(out);
        }
    }
    return out;
}

template <typename T>
std::vector<TokenFrame> StreamEncoder<T>::finish() {
    std::vector<TokenFrame> out;
    if (!finished_ && fill_ > 0) {
        run_frame(out);
    }
    finished_ = true;
    return out;
}

template <typename T>
StreamDecoder<T>::StreamDecoder(const CodecModel<T> & model, const Quantizer<T> & quantizer)
    : model_(&model), quantizer_(&quantizer) {
    require_streamable(model.config);
    if (quantizer.config.latent_dim != model.config.latent_dim) {
        throw DimensionError("quantizer and model latent widths differ");
    }
    basis_ = &dsp::basis_for(dsp::make_mdct_config(model.config.mdct_bins, model.config.sample_rate));
    decoder_ = std::make_unique<stream_detail::Pipeline<T>>(model.decoder, model.config);
    reset();
}

template <typename T>
StreamDecoder<T>::~StreamDecoder() = default;
template <typename T>
StreamDecoder<T>::StreamDecoder(StreamDecoder &&) noexcept = default;
template <typename T>
StreamDecoder<T> & StreamDecoder<T>::operator=(StreamDecoder &&) noexcept = default;

template <typename T>
void StreamDecoder<T>::reset() {
    tail_.assign(basis_->hop(), 0.0);
    ready_.clear();
    frames_ = 0;
    tokens_ = 0;
    emitted_ = 0;
    finished_ = false;
    decoder_->reset();
}

template <typename T>
void StreamDecoder<T>::add_spectral_frame(const std::vector<T> & frame) {
    const std::size_t m = basis_->hop();
    std::vector<double> buf(2 * m);
    dsp::imdct_frame(frame.data(), *basis_, buf.data());
    if (frames_ > 0) {
        for (std::size_t i = 0; i < m; ++i) {
            ready_.push_back(static_cast<T>(tail_[i] + buf[i]));
        }
    }
    std::copy(buf.begin() + m, buf.end(), tail_.begin());
    ++frames_;
}

template <typename T>
std::vector<T> StreamDecoder<T>::push(std::span<const TokenFrame> tokens) {
    if (finished_ && !tokens.empty()) {
        throw ContractError("stream decoder: push after finish (call reset first)");
    }
    const auto & cfg = model_->config;
    std::vector<T> latent(cfg.latent_dim);
    for (const auto & tok : tokens) {
        dequantize_frame(*quantizer_, tok, latent.data());
        for (const auto & f : decoder_->push(latent)) {
            add_spectral_frame(f);
        }
        ++tokens_;
    }
    // hold back one hop so output arrives in whole token frames
    const std::size_t per_token = cfg.downsample_factor * basis_->hop();
    const std::size_t target = tokens_ > 0 ? (tokens_ - 1) * per_token : 0;
    std::vector<T> out;
    if (target > emitted_) {
        const std::size_t n = target - emitted_;
        out.assign(ready_.begin(), ready_.begin() + static_cast<std::ptrdiff_t>(n));
        ready_.erase(ready_.begin(), ready_.begin() + static_cast<std::ptrdiff_t>(n));
        emitted_ = target;
    }
    return out;
}

template <typename T>
std::vector<T> StreamDecoder<T>::finish() {
    std::vector<T> out;
    if (finished_) {
        return out;
    }
    finished_ = true;
    out.swap(ready_);
    if (frames_ > 0) {
        for (double v : tail_) {
            out.push_back(static_cast<T>(v));
        }
    }
    emitted_ += out.size();
    return out;
}

template <typename T>
LatencyReport measure_latency(const CodecModel<T> & model, const Quantizer<T> & quantizer) {
    require_streamable(model.config);
    const auto & cfg = model.config;
    const std::size_t hop = cfg.mdct_bins;
    LatencyReport rep;
    rep.frame_latency_samples = cfg.downsample_factor * hop;
    rep.frame_latency_ms = 1000.0 * static_cast<double>(rep.frame_latency_samples) / static_cast<double>(cfg.sample_rate);
    rep.probe_positions = {0, rep.frame_latency_samples, 2 * rep.frame_latency_samples + hop / 2};

    // emission[i] = input samples consumed when output sample i came out
    auto run = [&](std::ptrdiff_t impulse, std::size_t length, std::vector<std::size_t> * first_token) {
        StreamEncoder<T> enc(model, quantizer);
        StreamDecoder<T> dec(model, quantizer);
        std::vector<T> out;
        std::vector<std::size_t> emission;
        for (std::size_t n = 0; n < length; ++n) {
            const T s = static_cast<std::ptrdiff_t>(n) == impulse ? T(0.5) : T(0);
            const auto toks = enc.push(std::span<const T>(&s, 1));
            if (first_token && !toks.empty() && first_token->empty()) {
                first_token->push_back(n + 1);
            }
            const auto y = dec.push(toks);
            out.insert(out.end(), y.begin(), y.end());
            emission.resize(out.size(), n + 1);
        }
        return std::pair{out, emission};
    };
    std::size_t worst = 0;
    for (auto p : rep.probe_positions) {
        const std::size_t length = p + 4 * rep.frame_latency_samples;
        std::vector<std::size_t> first;
        const auto [base, when] = run(-1, length, &first);
        const auto probe = run(static_cast<std::ptrdiff_t>(p), length, nullptr).first;
        if (!first.empty()) {
            rep.encoder_priming_samples = first[0];
        }
        if (probe.size() <= p || probe[p] == base[p]) {
            throw NumericError("latency probe: no response at sample " + std::to_string(p));
        }
        worst = std::max(worst, when[p] - p);
    }
    rep.first_output_delay_samples = worst;
    rep.first_output_delay_ms = 1000.0 * static_cast<double>(worst) / static_cast<double>(cfg.sample_rate);
    return rep;
}

template class StreamEncoder<float>;
template class StreamEncoder<double>;
template class StreamDecoder<float>;
template class StreamDecoder<double>;
template LatencyReport measure_latency(const CodecModel<float> &, const Quantizer<float> &);
template LatencyReport measure_latency(const CodecModel<double> &, const Quantizer<double> &);

} // namespace sc2
