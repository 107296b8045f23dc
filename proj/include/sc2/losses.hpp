#pragma once

#include "sc2/codec_model.hpp"
#include "sc2/dsp.hpp"
#include "sc2/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sc2::losses {

template <typename T>
struct VqLosses {
    Tensor<T> codebook;
    Tensor<T> commitment;
};

// Per stage, residual r ([F x D]) against its code e:
//   codebook   = sum_stages mean_f ||sg(r) - e||^2
//   commitment = sum_stages mean_f ||r - sg(e)||^2
// With stop_grad false both are plain ||r - e||^2.
template <typename T>
VqLosses<T> vq_losses(const std::vector<Tensor<T>> & residuals, const std::vector<Tensor<T>> & codes,
                      bool stop_grad = true);

// mean |hat - ref|
template <typename T>
Tensor<T> mdct_loss(const Tensor<T> & spec_hat, const Tensor<T> & spec_ref);

// MAE between log-mel matrices of two 1-D audio tensors of equal length
template <typename T>
Tensor<T> mel_loss(const Tensor<T> & audio_hat, const Tensor<T> & audio_ref, const dsp::MelConfig & cfg = {});

struct TapMask {
    std::vector<std::string> names;
    std::vector<bool> active;

    std::size_t size() const { return names.size(); }
    std::size_t active_count() const;
    bool is_active(const std::string & name) const;

    static TapMask all(const CodecConfig & cfg);
    static TapMask without_up_down(const CodecConfig & cfg); // drops enc.down, dec.up
    static TapMask without_io(const CodecConfig & cfg);      // drops enc.in, enc.out, dec.in, dec.out
    // "all", "wo_updo", "wo_io"
    static TapMask named(const std::string & preset, const CodecConfig & cfg);
};

// W_n [T_n x S_n] per tap, mapping student tap dims onto teacher tap dims.
template <typename T>
struct ProjectionSet {
    std::vector<std::string> names;
    std::vector<Tensor<T>> weights;

    std::size_t size() const { return weights.size(); }
};

// Tap widths in pipeline order.
std::vector<std::size_t> tap_dims(const CodecConfig & cfg);

// W_n ~ N(0, 1/S_n), drawn from its own generator so student init is unaffected.
template <typename T = float>
ProjectionSet<T> build_projections(const CodecConfig & student, const CodecConfig & teacher, std::uint64_t seed);

// (1/N_active) sum_{active n} mean_batch ||W_n O_s,n - O_t,n||_F
template <typename T>
Tensor<T> kd_loss(const std::vector<TapSet<T>> & student, const std::vector<TapSet<T>> & teacher,
                  const ProjectionSet<T> & proj, const TapMask & mask);

template <typename T>
Tensor<T> kd_loss(const TapSet<T> & student, const TapSet<T> & teacher, const ProjectionSet<T> & proj,
                  const TapMask & mask) {
    return kd_loss(std::vector<TapSet<T>>{student}, std::vector<TapSet<T>>{teacher}, proj, mask);
}

struct LossWeights {
    double mdct = 45.0;
    double mel = 45.0;
    double cb = 1.0;
    double com = 0.25;
    double kd = 0.01;

    void validate() const;
};

// Undefined components count as zero.
template <typename T>
struct LossComponents {
    Tensor<T> adv;
    Tensor<T> fm;
    Tensor<T> mdct;
    Tensor<T> mel;
    Tensor<T> cb;
    Tensor<T> com;
    Tensor<T> kd;
};

// adv + fm + w.mdct*mdct + w.mel*mel + w.cb*cb + w.com*com + w.kd*kd
template <typename T>
Tensor<T> total_loss(const LossComponents<T> & c, const LossWeights & w);

} // namespace sc2::losses
