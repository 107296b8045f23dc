#pragma once

#include "sc2/ops.hpp"
#include "sc2/tensor.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sc2 {

struct CodecConfig {
    std::string name = "student";
    bool causal = true;
    std::size_t c_l = 200;
    std::size_t c_h = 400;
    std::size_t k_blocks = 8;
    std::size_t mdct_bins = 160;
    std::size_t latent_dim = 64;
    std::size_t downsample_factor = 2;
    std::size_t conv_kernel = 7;
    std::size_t updown_kernel = 4;
    std::size_t block_kernel = 7;
    bool depthwise = true; // block conv; false gives a dense c_l x c_l conv
    bool cumulative_grn = true; // running channel norms (streamable); false uses whole-utterance norms
    std::size_t sample_rate = 16000;

    std::size_t tap_count() const { return 2 * k_blocks + 6; }
    ops::GrnMode grn_mode() const { return cumulative_grn ? ops::GrnMode::cumulative : ops::GrnMode::global; }
    ops::Padding padding() const { return causal ? ops::Padding::causal : ops::Padding::centered; }
    void validate() const;
};

// "student" (CL), "teacher" (NH), "CH", "NL"; toy scale: "toy-student",
// "toy-teacher", "toy-CH", "toy-NL"
CodecConfig preset(std::string_view name);
std::vector<std::string> preset_names();

// Canonical JSON record (sorted keys) and its FNV-1a 64-bit hash.
std::string config_json(const CodecConfig & cfg);
CodecConfig config_from_json(const std::string & text);
std::uint64_t config_hash(const CodecConfig & cfg);
std::uint64_t fnv1a64(const void * data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ULL);

enum class ModuleKind { conv_in, block, down, up, conv_out };

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

// One module of the pipeline. Parameter order by kind:
//   conv_in / conv_out / down / up : weight, bias
//   block : dwconv.weight, dwconv.bias, norm.gamma, norm.beta, pw1.weight, pw1.bias,
//           grn.gamma, grn.beta, pw2.weight, pw2.bias
template <typename T>
struct Module {
    std::string name; // "enc.in", "enc.block3", "dec.up", ...
    ModuleKind kind;
    std::vector<NamedParam<T>> params;

    const Tensor<T> & p(std::size_t i) const { return params[i].tensor; }
};

namespace block_param {
enum : std::size_t { dw_w, dw_b, ln_g, ln_b, pw1_w, pw1_b, grn_g, grn_b, pw2_w, pw2_b, count };
}

template <typename T>
struct TapSet {
    std::vector<std::string> names;
    std::vector<Tensor<T>> maps; // each [S_n x F_n]

    std::size_t size() const { return maps.size(); }
    void add(std::string name, Tensor<T> map) {
        names.push_back(std::move(name));
        maps.push_back(std::move(map));
    }
};

template <typename T>
struct CodecModel {
    CodecConfig config;
    std::vector<Module<T>> encoder;
    std::vector<Module<T>> decoder;

    // all parameters in pipeline order with full names ("enc.block1.pw1.weight")
    std::vector<NamedParam<T>> named_parameters() const;
    std::vector<Tensor<T>> parameters() const;
    void set_requires_grad(bool flag) const;
};

template <typename T = float>
CodecModel<T> build(const CodecConfig & cfg, std::uint64_t seed);

// Same parameter values in another precision (fresh leaves).
template <typename To, typename From>
CodecModel<To> cast_model(const CodecModel<From> & model);

// Tap names in pipeline order.
std::vector<std::string> tap_names(const CodecConfig & cfg);

template <typename T>
Tensor<T> convnext_block(const Module<T> & block, const Tensor<T> & x, const CodecConfig & cfg);

// spec [mdct_bins x F] -> latent [latent_dim x ceil(F/2)]
template <typename T>
Tensor<T> encode(const CodecModel<T> & model, const Tensor<T> & spec, TapSet<T> * taps = nullptr);

// latent [latent_dim x F'] -> spec_hat [mdct_bins x 2F']
template <typename T>
Tensor<T> decode(const CodecModel<T> & model, const Tensor<T> & latent, TapSet<T> * taps = nullptr);

struct ModuleCount {
    std::string name;
    std::uint64_t value;
};

struct CountReport {
    std::vector<ModuleCount> modules;
    std::uint64_t total = 0;
};

CountReport count_params(const CodecModel<float> & model);
CountReport count_params(const CodecModel<double> & model);

// Per-element FLOP charges for non-MAC work.
namespace flop_cost {
inline constexpr std::uint64_t layer_norm = 5; // mean, centre, square, scale, affine
inline constexpr std::uint64_t grn = 4;        // square-accumulate, normalise, affine
inline constexpr std::uint64_t activation = 1;
inline constexpr std::uint64_t residual = 1;
} // namespace flop_cost

// FLOPs for one second of audio at the config's sample rate and a 160-sample
// hop; one multiply-accumulate counts 2, biases are not counted.
CountReport count_flops_per_second(const CodecConfig & cfg, std::size_t hop = 160);
double count_flops(const CodecConfig & cfg, double seconds, std::size_t hop = 160);

} // namespace sc2
