#include "sc2/losses.hpp"

#include "sc2/error.hpp"
#include "sc2/ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sc2::losses {

template <typename T>
VqLosses<T> vq_losses(const std::vector<Tensor<T>> & residuals, const std::vector<Tensor<T>> & codes,
                      bool stop_grad) {
    if (residuals.size() != codes.size()) {
        throw DimensionError("vq_losses: " + std::to_string(residuals.size()) + " residuals vs " +
                             std::to_string(codes.size()) + " codes");
    }
    std::vector<Tensor<T>> cb_terms, com_terms;
    for (std::size_t s = 0; s < residuals.size(); ++s) {
        const auto & r = residuals[s];
        const auto & e = codes[s];
        if (r.shape() != e.shape() || r.rank() != 2) {
            throw DimensionError("vq_losses: stage " + std::to_string(s) + " shapes " + shape_str(r.shape()) +
                                 " vs " + shape_str(e.shape()));
        }
        const std::size_t frames = r.dim(0);
        if (frames == 0) {
            continue;
        }
        const T inv = T(1) / static_cast<T>(frames);
        if (stop_grad) {
            cb_terms.push_back(ops::scale(ops::sum(ops::square(ops::sub(r.detach(), e))), inv));
            com_terms.push_back(ops::scale(ops::sum(ops::square(ops::sub(r, e.detach()))), inv));
        } else {
            auto t = ops::scale(ops::sum(ops::square(ops::sub(r, e))), inv);
            cb_terms.push_back(t);
            com_terms.push_back(t);
        }
    }
    if (cb_terms.empty()) {
        return {Tensor<T>::scalar(T(0)), Tensor<T>::scalar(T(0))};
    }
    return {ops::add_n(cb_terms), ops::add_n(com_terms)};
}

template <typename T>
Tensor<T> mdct_loss(const Tensor<T> & spec_hat, const Tensor<T> & spec_ref) {
    if (spec_hat.shape() != spec_ref.shape()) {
        throw DimensionError("mdct_loss: " + shape_str(spec_hat.shape()) + " vs " + shape_str(spec_ref.shape()));
    }
    return ops::mean_abs_error(spec_hat, spec_ref);
}

template <typename T>
Tensor<T> mel_loss(const Tensor<T> & audio_hat, const Tensor<T> & audio_ref, const dsp::MelConfig & cfg) {
    if (audio_hat.rank() != 1 || audio_ref.rank() != 1 || audio_hat.numel() != audio_ref.numel()) {
        throw DimensionError("mel_loss: lengths differ, " + shape_str(audio_hat.shape()) + " vs " +
                             shape_str(audio_ref.shape()));
    }
    auto a = dsp::mel_spectrogram_op(audio_hat, cfg);
    auto b = dsp::mel_spectrogram_op(audio_ref, cfg);
    return ops::mean_abs_error(a, b);
}

std::size_t TapMask::active_count() const {
    return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

bool TapMask::is_active(const std::string & name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) {
            return active[i];
        }
    }
    throw ContractError("tap mask has no tap '" + name + "'");
}

namespace {

TapMask mask_except(const CodecConfig & cfg, const std::vector<std::string> & off) {
    TapMask m;
    m.names = tap_names(cfg);
    for (const auto & n : m.names) {
        m.active.push_back(std::find(off.begin(), off.end(), n) == off.end());
    }
    return m;
}

} // namespace

TapMask TapMask::all(const CodecConfig & cfg) { return mask_except(cfg, {}); }

TapMask TapMask::without_up_down(const CodecConfig & cfg) { return mask_except(cfg, {"enc.down", "dec.up"}); }

TapMask TapMask::without_io(const CodecConfig & cfg) {
    return mask_except(cfg, {"enc.in", "enc.out", "dec.in", "dec.out"});
}

TapMask TapMask::named(const std::string & preset, const CodecConfig & cfg) {
    if (preset == "all") {
        return all(cfg);
    }
    if (preset == "wo_updo") {
        return without_up_down(cfg);
    }
    if (preset == "wo_io") {
        return without_io(cfg);
    }
    // wider reading of the up/down ablation: also drop the convs on either side
    if (preset == "wo_updo_wide") {
        return mask_except(cfg, {"enc.block" + std::to_string(cfg.k_blocks), "enc.down", "enc.out", "dec.in",
                                 "dec.up", "dec.block1"});
    }
    throw ConfigError("unknown tap mask '" + preset + "' (expected all, wo_updo, wo_io, wo_updo_wide)");
}

std::vector<std::size_t> tap_dims(const CodecConfig & cfg) {
    std::vector<std::size_t> d;
    d.push_back(cfg.c_l);
    for (std::size_t b = 0; b < cfg.k_blocks; ++b) {
        d.push_back(cfg.c_l);
    }
    d.push_back(cfg.c_l);
    d.push_back(cfg.latent_dim);
    d.push_back(cfg.c_l);
    d.push_back(cfg.c_l);
    for (std::size_t b = 0; b < cfg.k_blocks; ++b) {
        d.push_back(cfg.c_l);
    }
    d.push_back(cfg.mdct_bins);
    return d;
}

template <typename T>
ProjectionSet<T> build_projections(const CodecConfig & student, const CodecConfig & teacher, std::uint64_t seed) {
    if (student.k_blocks != teacher.k_blocks) {
        throw DimensionError("projections: student has K=" + std::to_string(student.k_blocks) + ", teacher K=" +
                             std::to_string(teacher.k_blocks));
    }
    const auto names = tap_names(student);
    const auto s = tap_dims(student);
    const auto t = tap_dims(teacher);
    std::mt19937_64 rng(seed ^ 0x6b64u);
    ProjectionSet<T> p;
    p.names = names;
    for (std::size_t n = 0; n < names.size(); ++n) {
        std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(s[n])));
        std::vector<T> w(t[n] * s[n]);
        for (auto & x : w) {
            x = static_cast<T>(nd(rng));
        }
        p.weights.emplace_back(Shape{t[n], s[n]}, std::move(w), true);
    }
    return p;
}

template <typename T>
Tensor<T> kd_loss(const std::vector<TapSet<T>> & student, const std::vector<TapSet<T>> & teacher,
                  const ProjectionSet<T> & proj, const TapMask & mask) {
    if (student.size() != teacher.size() || student.empty()) {
        throw DimensionError("kd_loss: batch of " + std::to_string(student.size()) + " student vs " +
                             std::to_string(teacher.size()) + " teacher items");
    }
    const std::size_t n_taps = proj.size();
    if (mask.size() != n_taps) {
        throw DimensionError("kd_loss: mask has " + std::to_string(mask.size()) + " taps, projections " +
                             std::to_string(n_taps));
    }
    const std::size_t active = mask.active_count();
    if (active == 0) {
        return Tensor<T>::scalar(T(0));
    }
    const T inv_batch = T(1) / static_cast<T>(student.size());
    std::vector<Tensor<T>> terms;
    for (std::size_t b = 0; b < student.size(); ++b) {
        const auto & so = student[b];
        const auto & to = teacher[b];
        if (so.size() != n_taps || to.size() != n_taps) {
            throw DimensionError("kd_loss: expected " + std::to_string(n_taps) + " taps, got " +
                                 std::to_string(so.size()) + " student / " + std::to_string(to.size()) + " teacher");
        }
        for (std::size_t n = 0; n < n_taps; ++n) {
            if (!mask.active[n]) {
                continue;
            }
            const auto & s = so.maps[n];
            const auto & t = to.maps[n];
            const auto & w = proj.weights[n];
            if (s.rank() != 2 || t.rank() != 2 || s.dim(1) != t.dim(1)) {
                throw DimensionError("kd_loss: tap " + proj.names[n] + " frames differ, student " +
                                     shape_str(s.shape()) + " vs teacher " + shape_str(t.shape()));
            }
            if (w.dim(0) != t.dim(0) || w.dim(1) != s.dim(0)) {
                throw DimensionError("kd_loss: tap " + proj.names[n] + " projection " + shape_str(w.shape()) +
                                     " does not map " + shape_str(s.shape()) + " onto " + shape_str(t.shape()));
            }
            terms.push_back(ops::frobenius_norm(ops::sub(ops::matmul(w, s), t)));
        }
    }
    return ops::scale(ops::add_n(terms), inv_batch / static_cast<T>(active));
}

void LossWeights::validate() const {
    const std::pair<const char *, double> all[] = {
        {"mdct", mdct}, {"mel", mel}, {"cb", cb}, {"com", com}, {"kd", kd}};
    for (const auto & [name, v] : all) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ConfigError(std::string("loss weight ") + name + " must be finite and >= 0, got " +
                              std::to_string(v));
        }
    }
}

template <typename T>
Tensor<T> total_loss(const LossComponents<T> & c, const LossWeights & w) {
    w.validate();
    std::vector<Tensor<T>> terms;
    auto put = [&](const Tensor<T> & t, double weight, bool weighted) {
        if (!t.defined()) {
            return;
        }
        if (t.numel() != 1) {
            throw DimensionError("total_loss: component is not a scalar, " + shape_str(t.shape()));
        }
        terms.push_back(weighted ? ops::scale(t, static_cast<T>(weight)) : t);
    };
    put(c.adv, 1.0, false);
    put(c.fm, 1.0, false);
    put(c.mdct, w.mdct, true);
    put(c.mel, w.mel, true);
    put(c.cb, w.cb, true);
    put(c.com, w.com, true);
    // a zero weight leaves the objective (and its graph) identical to the plain student
    if (w.kd != 0.0) {
        put(c.kd, w.kd, true);
    }
    if (terms.empty()) {
        return Tensor<T>::scalar(T(0));
    }
    return ops::add_n(terms);
}

#define SC2_LOSSES(T)                                                                                                 \
    template VqLosses<T> vq_losses(const std::vector<Tensor<T>> &, const std::vector<Tensor<T>> &, bool);             \
    template Tensor<T> mdct_loss(const Tensor<T> &, const Tensor<T> &);                                                \
    template Tensor<T> mel_loss(const Tensor<T> &, const Tensor<T> &, const dsp::MelConfig &);                         \
    template ProjectionSet<T> build_projections<T>(const CodecConfig &, const CodecConfig &, std::uint64_t);           \
    template Tensor<T> kd_loss(const std::vector<TapSet<T>> &, const std::vector<TapSet<T>> &,                         \
                               const ProjectionSet<T> &, const TapMask &);                                             \
    template Tensor<T> total_loss(const LossComponents<T> &, const LossWeights &);

SC2_LOSSES(float)
SC2_LOSSES(double)

} // namespace sc2::losses
