#include "sc2/quantizer.hpp"

#include "sc2/error.hpp"
#include "sc2/kernels.hpp"
#include "sc2/losses.hpp"
#include "sc2/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace sc2 {

namespace {

std::size_t log2_exact(std::size_t n, const char * what) {
    if (n < 2 || (n & (n - 1)) != 0) {
        throw ConfigError(std::string(what) + " must be a power of two >= 2, got " + std::to_string(n));
    }
    std::size_t b = 0;
    while ((std::size_t{1} << b) < n) {
        ++b;
    }
    return b;
}

} // namespace

std::size_t QuantizerConfig::sq_bits() const { return sq_dims * log2_exact(sq_levels, "sq_levels"); }
std::size_t QuantizerConfig::vq_bits() const { return log2_exact(codebook_size, "codebook_size"); }

void QuantizerConfig::validate() const {
    if (sq_dims != 7 || vq_stages != 2) {
        throw ConfigError("token layout requires 7 SQ dims and 2 VQ stages");
    }
    if (sq_levels > 256 || codebook_size > 65536) {
        throw ConfigError("SQ levels or codebook size exceed the token field widths");
    }
    (void)bits_per_frame();
    if (latent_dim == 0) {
        throw ConfigError("latent_dim must be positive");
    }
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) {
        throw ConfigError("ema_decay must be in [0, 1)");
    }
}

template <typename T>
std::vector<Tensor<T>> Quantizer<T>::parameters() const {
    auto out = projection_parameters();
    for (auto & c : codebook_parameters()) {
        out.push_back(c);
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>> Quantizer<T>::projection_parameters() const {
    return {down_w, down_b, up_w, up_b};
}

template <typename T>
std::vector<Tensor<T>> Quantizer<T>::codebook_parameters() const {
    std::vector<Tensor<T>> out;
    for (const auto & s : stages) {
        out.push_back(s.entries);
    }
    return out;
}

template <typename T>
Quantizer<T> build_quantizer(const QuantizerConfig & cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 0.02);
    auto normal = [&](Shape s) {
        std::vector<T> v(shape_numel(s));
        for (auto & x : v) {
            x = static_cast<T>(nd(rng));
        }
        return Tensor<T>(std::move(s), std::move(v), true);
    };
    Quantizer<T> q;
    q.config = cfg;
    q.down_w = normal({cfg.sq_dims, cfg.latent_dim});
    q.down_b = Tensor<T>::zeros({cfg.sq_dims}, true);
    q.up_w = normal({cfg.latent_dim, cfg.sq_dims});
    q.up_b = Tensor<T>::zeros({cfg.latent_dim}, true);
    for (std::size_t s = 0; s < cfg.vq_stages; ++s) {
        IvqCodebook<T> cb;
        cb.entries = normal({cfg.codebook_size, cfg.latent_dim});
        cb.usage.assign(cfg.codebook_size, 1.0 / static_cast<double>(cfg.codebook_size));
        q.stages.push_back(std::move(cb));
    }
    return q;
}

template <typename To, typename From>
Quantizer<To> cast_quantizer(const Quantizer<From> & q) {
    auto conv = [](const Tensor<From> & t) {
        auto d = t.data();
        std::vector<To> v(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
            v[i] = static_cast<To>(d[i]);
        }
        return Tensor<To>(t.shape(), std::move(v), t.requires_grad());
    };
    Quantizer<To> out;
    out.config = q.config;
    out.down_w = conv(q.down_w);
    out.down_b = conv(q.down_b);
    out.up_w = conv(q.up_w);
    out.up_b = conv(q.up_b);
    for (const auto & s : q.stages) {
        out.stages.push_back({conv(s.entries), s.usage});
    }
    return out;
}

std::size_t sq_index(double v, std::size_t levels) {
    const double u = (v + 1.0) / 2.0;
    const double top = static_cast<double>(levels - 1);
    const double idx = std::floor(u * top + 0.5);
    return static_cast<std::size_t>(std::clamp(idx, 0.0, top));
}

double sq_level(std::size_t index, std::size_t levels) {
    return 2.0 * static_cast<double>(index) / static_cast<double>(levels - 1) - 1.0;
}

template <typename T>
void sq_quantize(const Quantizer<T> & q, const T * latent_frame, std::uint8_t * symbols, T * dequant) {
    const auto & c = q.config;
    std::vector<T> z(c.sq_dims), lv(c.sq_dims);
    kernels::linear_row(latent_frame, q.down_w.data().data(), q.down_b.data().data(), c.latent_dim, c.sq_dims,
                        z.data());
    for (std::size_t i = 0; i < c.sq_dims; ++i) {
        const T v = std::tanh(z[i]);
        const std::size_t idx = sq_index(static_cast<double>(v), c.sq_levels);
        symbols[i] = static_cast<std::uint8_t>(idx);
        lv[i] = static_cast<T>(sq_level(idx, c.sq_levels));
    }
    if (dequant) {
        kernels::linear_row(lv.data(), q.up_w.data().data(), q.up_b.data().data(), c.sq_dims, c.latent_dim, dequant);
    }
}

template <typename T>
std::size_t ivq_quantize(const IvqCodebook<T> & cb, const T * residual, std::size_t dim, T * code) {
    const std::size_t rows = cb.entries.dim(0);
    if (rows == 0) {
        throw ContractError("empty codebook");
    }
    const T * table = cb.entries.data().data();
    const std::size_t idx = kernels::nearest_row(residual, table, rows, dim);
    if (code) {
        std::copy(table + idx * dim, table + (idx + 1) * dim, code);
    }
    return idx;
}

template <typename T>
RsvqOutput<T> rsvq_forward(Quantizer<T> & q, const Tensor<T> & latent, QuantMode mode,
                           const std::vector<std::vector<std::size_t>> * fixed_indices) {
    const auto & c = q.config;
    if (latent.rank() != 2 || latent.dim(0) != c.latent_dim) {
        throw DimensionError("rsvq_forward: expected [" + std::to_string(c.latent_dim) + " x F], got " +
                             shape_str(latent.shape()));
    }
    if (fixed_indices) {
        bool ok = fixed_indices->size() == c.vq_stages;
        for (const auto & st : *fixed_indices) {
            ok = ok && st.size() == latent.dim(1);
            for (auto i : st) {
                ok = ok && i < c.codebook_size;
            }
        }
        if (!ok) {
            throw DimensionError("rsvq_forward: fixed indices do not match " + std::to_string(c.vq_stages) +
                                 " stages x " + std::to_string(latent.dim(1)) + " frames");
        }
    }
    std::unique_ptr<NoGradGuard> guard;
    if (mode == QuantMode::inference) {
        guard = std::make_unique<NoGradGuard>();
    }
    const bool sg = mode == QuantMode::training;
    const std::size_t frames = latent.dim(1), d = c.latent_dim;
    auto stop = [&](const Tensor<T> & t) { return sg ? t.detach() : t; };

    RsvqOutput<T> out;
    out.tokens.resize(frames);

    auto x = ops::transpose(latent); // [F x D]
    auto v = ops::tanh(ops::linear(x, q.down_w, q.down_b));
    std::vector<T> levels(frames * c.sq_dims);
    {
        auto vv = v.data();
        for (std::size_t f = 0; f < frames; ++f) {
            for (std::size_t i = 0; i < c.sq_dims; ++i) {
                const std::size_t idx = sq_index(static_cast<double>(vv[f * c.sq_dims + i]), c.sq_levels);
                out.tokens[f].sq[i] = static_cast<std::uint8_t>(idx);
                levels[f * c.sq_dims + i] = static_cast<T>(sq_level(idx, c.sq_levels));
            }
        }
    }
    Tensor<T> s;
    if (mode == QuantMode::surrogate) {
        s = v;
    } else if (mode == QuantMode::training) {
        s = ops::straight_through(v, levels);
    } else {
        s = Tensor<T>(v.shape(), levels);
    }
    auto q0 = ops::linear(s, q.up_w, q.up_b);

    std::vector<Tensor<T>> residuals, codes;
    auto r = ops::sub(x, stop(q0));
    const auto r1 = r;
    for (std::size_t st = 0; st < c.vq_stages; ++st) {
        auto & cb = q.stages[st];
        std::vector<std::size_t> idx(frames);
        auto rv = r.data();
        for (std::size_t f = 0; f < frames; ++f) {
            idx[f] = fixed_indices ? (*fixed_indices)[st][f] : ivq_quantize(cb, rv.data() + f * d, d);
        }
        out.stage_inputs.emplace_back(rv.begin(), rv.end());
        auto e = ops::gather_rows(cb.entries, idx);
        residuals.push_back(r);
        codes.push_back(e);
        for (std::size_t f = 0; f < frames; ++f) {
            if (st == 0) {
                out.tokens[f].vq1 = static_cast<std::uint16_t>(idx[f]);
            } else {
                out.tokens[f].vq2 = static_cast<std::uint16_t>(idx[f]);
            }
        }
        if (mode == QuantMode::training && frames > 0) {
            std::vector<double> hist(c.codebook_size, 0.0);
            for (auto i : idx) {
                hist[i] += 1.0;
            }
            for (std::size_t k = 0; k < c.codebook_size; ++k) {
                cb.usage[k] = c.ema_decay * cb.usage[k] + (1.0 - c.ema_decay) * hist[k] / static_cast<double>(frames);
            }
        }
        out.indices.push_back(std::move(idx));
        r = ops::sub(r, stop(e));
    }

    // (q0 + e1) + e2, left to right
    std::vector<T> values(q0.data().begin(), q0.data().end());
    for (const auto & e : codes) {
        auto ev = e.data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            values[i] = values[i] + ev[i];
        }
    }
    Tensor<T> quantized;
    if (mode == QuantMode::training) {
        // gradient: SQ projection path plus identity through the first residual
        quantized = ops::straight_through(ops::add(q0, r1), values);
    } else if (mode == QuantMode::surrogate) {
        quantized = q0;
        for (const auto & e : codes) {
            quantized = ops::add(quantized, e);
        }
    } else {
        quantized = Tensor<T>(q0.shape(), values);
    }
    out.quantized = ops::transpose(quantized);

    if (mode != QuantMode::inference) {
        const auto vq = losses::vq_losses(residuals, codes, sg);
        out.codebook_loss = vq.codebook;
        out.commitment_loss = vq.commitment;
        if (mode == QuantMode::training && frames > 0) {
            // SQ commitment pulls the bounded projection toward its levels
            auto sq_term = ops::scale(ops::sum(ops::square(ops::sub(v, Tensor<T>(v.shape(), levels)))),
                                      T(1) / static_cast<T>(frames));
            out.commitment_loss = ops::add(out.commitment_loss, sq_term);
        }
    } else {
        out.codebook_loss = Tensor<T>::scalar(T(0));
        out.commitment_loss = Tensor<T>::scalar(T(0));
    }
    return out;
}

template <typename T>
void dequantize_frame(const Quantizer<T> & q, const TokenFrame & tok, T * out) {
    const auto & c = q.config;
    validate_token(tok, c);
    std::vector<T> lv(c.sq_dims);
    for (std::size_t i = 0; i < c.sq_dims; ++i) {
        lv[i] = static_cast<T>(sq_level(tok.sq[i], c.sq_levels));
    }
    kernels::linear_row(lv.data(), q.up_w.data().data(), q.up_b.data().data(), c.sq_dims, c.latent_dim, out);
    const std::size_t ids[2] = {tok.vq1, tok.vq2};
    for (std::size_t st = 0; st < c.vq_stages; ++st) {
        const T * e = q.stages[st].entries.data().data() + ids[st] * c.latent_dim;
        for (std::size_t i = 0; i < c.latent_dim; ++i) {
            out[i] = out[i] + e[i];
        }
    }
}

template <typename T>
Tensor<T> dequantize(const Quantizer<T> & q, const std::vector<TokenFrame> & tokens) {
    const std::size_t d = q.config.latent_dim, frames = tokens.size();
    std::vector<T> row(d), v(d * frames);
    for (std::size_t f = 0; f < frames; ++f) {
        dequantize_frame(q, tokens[f], row.data());
        for (std::size_t i = 0; i < d; ++i) {
            v[i * frames + f] = row[i];
        }
    }
    return Tensor<T>({d, frames}, std::move(v));
}

template <typename T>
std::size_t codebook_refresh(IvqCodebook<T> & cb, const std::vector<T> & residuals, std::size_t rows,
                             const QuantizerConfig & cfg, std::uint64_t seed) {
    const std::size_t d = cfg.latent_dim;
    if (residuals.size() != rows * d) {
        throw DimensionError("codebook_refresh: residual batch is not rows x latent_dim");
    }
    std::vector<std::size_t> dead;
    const double thr = cfg.refresh_threshold();
    for (std::size_t k = 0; k < cb.usage.size(); ++k) {
        if (cb.usage[k] < thr) {
            dead.push_back(k);
        }
    }
    if (dead.empty() || rows == 0) {
        return 0;
    }
    const std::size_t k = dead.size();
    std::mt19937_64 rng(seed);
    // initial centroids: distinct rows when the batch is large enough
    std::vector<std::size_t> pick;
    if (rows >= k) {
        pick.resize(rows);
        std::iota(pick.begin(), pick.end(), 0);
        std::shuffle(pick.begin(), pick.end(), rng);
        pick.resize(k);
    } else {
        std::uniform_int_distribution<std::size_t> ud(0, rows - 1);
        for (std::size_t j = 0; j < k; ++j) {
            pick.push_back(ud(rng));
        }
    }
    std::vector<T> cent(k * d);
    for (std::size_t j = 0; j < k; ++j) {
        std::copy(residuals.begin() + pick[j] * d, residuals.begin() + (pick[j] + 1) * d, cent.begin() + j * d);
    }
    std::vector<double> acc(k * d);
    std::vector<std::size_t> cnt(k);
    for (std::size_t it = 0; it < cfg.kmeans_iters; ++it) {
        std::fill(acc.begin(), acc.end(), 0.0);
        std::fill(cnt.begin(), cnt.end(), 0);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t j = kernels::nearest_row(residuals.data() + r * d, cent.data(), k, d);
            ++cnt[j];
            for (std::size_t i = 0; i < d; ++i) {
                acc[j * d + i] += static_cast<double>(residuals[r * d + i]);
            }
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (cnt[j] == 0) {
                continue;
            }
            for (std::size_t i = 0; i < d; ++i) {
                cent[j * d + i] = static_cast<T>(acc[j * d + i] / static_cast<double>(cnt[j]));
            }
        }
    }
    std::normal_distribution<double> noise(0.0, cfg.refresh_noise);
    auto table = cb.entries.mutable_data();
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < d; ++i) {
            table[dead[j] * d + i] = static_cast<T>(static_cast<double>(cent[j * d + i]) + noise(rng));
        }
        cb.usage[dead[j]] = 1.0 / static_cast<double>(cb.usage.size());
    }
    return k;
}

double perplexity(const std::vector<std::size_t> & indices, std::size_t codebook_size) {
    if (indices.empty()) {
        return 0.0;
    }
    std::vector<double> hist(codebook_size, 0.0);
    for (auto i : indices) {
        hist.at(i) += 1.0;
    }
    double h = 0.0;
    const double n = static_cast<double>(indices.size());
    for (double c : hist) {
        if (c > 0) {
            const double p = c / n;
            h -= p * std::log(p);
        }
    }
    return std::exp(h);
}

void validate_token(const TokenFrame & t, const QuantizerConfig & cfg) {
    for (auto s : t.sq) {
        if (s >= cfg.sq_levels) {
            throw EncodingError("SQ symbol " + std::to_string(s) + " out of range");
        }
    }
    if (t.vq1 >= cfg.codebook_size || t.vq2 >= cfg.codebook_size) {
        throw EncodingError("VQ index out of range");
    }
}

#define SC2_INSTANTIATE_QUANT(T)                                                                                   \
    template struct Quantizer<T>;                                                                                  \
    template Quantizer<T> build_quantizer<T>(const QuantizerConfig &, std::uint64_t);                              \
    template void sq_quantize<T>(const Quantizer<T> &, const T *, std::uint8_t *, T *);                            \
    template std::size_t ivq_quantize<T>(const IvqCodebook<T> &, const T *, std::size_t, T *);                     \
    template RsvqOutput<T> rsvq_forward<T>(Quantizer<T> &, const Tensor<T> &, QuantMode,                            \
                                            const std::vector<std::vector<std::size_t>> *);                       \
    template Tensor<T> dequantize<T>(const Quantizer<T> &, const std::vector<TokenFrame> &);                       \
    template void dequantize_frame<T>(const Quantizer<T> &, const TokenFrame &, T *);                              \
    template std::size_t codebook_refresh<T>(IvqCodebook<T> &, const std::vector<T> &, std::size_t,                \
                                             const QuantizerConfig &, std::uint64_t);

SC2_INSTANTIATE_QUANT(float)
SC2_INSTANTIATE_QUANT(double)

template Quantizer<double> cast_quantizer<double, float>(const Quantizer<float> &);
template Quantizer<float> cast_quantizer<float, double>(const Quantizer<double> &);
template Quantizer<float> cast_quantizer<float, float>(const Quantizer<float> &);

} // namespace sc2
