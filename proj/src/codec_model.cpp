#include "sc2/codec_model.hpp"

#include "sc2/error.hpp"

#include "json.hpp"

#include <random>

namespace sc2 {

void CodecConfig::validate() const {
    if (k_blocks < 1) {
        throw ConfigError("k_blocks must be >= 1");
    }
    if (c_l == 0 || c_h == 0 || !(c_l < c_h)) {
        throw ConfigError("need 0 < c_l < c_h, got c_l=" + std::to_string(c_l) + " c_h=" + std::to_string(c_h));
    }
    if (mdct_bins == 0 || latent_dim == 0) {
        throw ConfigError("mdct_bins and latent_dim must be positive");
    }
    if (downsample_factor != 2) {
        throw ConfigError("downsample_factor must be 2");
    }
    if (conv_kernel < 1 || block_kernel < 1 || updown_kernel < downsample_factor) {
        throw ConfigError("invalid kernel sizes");
    }
}

CodecConfig preset(std::string_view name) {
    CodecConfig c;
    if (name == "student" || name == "CL") {
        c.name = "student";
    } else if (name == "teacher" || name == "NH") {
        c.name = "teacher";
        c.causal = false;
        c.cumulative_grn = false;
        c.c_l = 256;
        c.c_h = 512;
    } else if (name == "CH") {
        c.name = "CH";
        c.c_l = 256;
        c.c_h = 512;
    } else if (name == "NL") {
        c.name = "NL";
        c.causal = false;
        c.cumulative_grn = false;
    } else if (name == "toy-student") {
        c.name = "toy-student";
        c.c_l = 32;
        c.c_h = 64;
        c.k_blocks = 2;
    } else if (name == "toy-teacher") {
        c.name = "toy-teacher";
        c.causal = false;
        c.cumulative_grn = false;
        c.c_l = 64;
        c.c_h = 128;
        c.k_blocks = 2;
    } else if (name == "toy-CH") {
        c.name = "toy-CH";
        c.c_l = 64;
        c.c_h = 128;
        c.k_blocks = 2;
    } else if (name == "toy-NL") {
        c.name = "toy-NL";
        c.causal = false;
        c.cumulative_grn = false;
        c.c_l = 32;
        c.c_h = 64;
        c.k_blocks = 2;
    } else {
        throw ConfigError("unknown preset '" + std::string(name) + "'");
    }
    return c;
}

std::vector<std::string> preset_names() { return {"student", "teacher", "CH", "NL", "toy-student", "toy-teacher", "toy-CH", "toy-NL"};
}

namespace {

nlohmann::json to_json(const CodecConfig & c) {
    return {{"name", c.name},
            {"causal", c.causal},
            {"c_l", c.c_l},
            {"c_h", c.c_h},
            {"k_blocks", c.k_blocks},
            {"mdct_bins", c.mdct_bins},
            {"latent_dim", c.latent_dim},
            {"downsample_factor", c.downsample_factor},
            {"conv_kernel", c.conv_kernel},
            {"updown_kernel", c.updown_kernel},
            {"block_kernel", c.block_kernel},
            {"depthwise", c.depthwise},
            {"cumulative_grn", c.cumulative_grn},
            {"sample_rate", c.sample_rate}};
}

} // namespace

std::string config_json(const CodecConfig & cfg) { return to_json(cfg).dump(); }

CodecConfig config_from_json(const std::string & text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception & e) {
        throw ConfigError(std::string("codec config: ") + e.what());
    }
    CodecConfig c;
    const auto ref = to_json(c);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!ref.contains(it.key())) {
            throw ConfigError("codec config: unknown key '" + it.key() + "'");
        }
    }
    try {
        c.name = j.value("name", c.name);
        c.causal = j.value("causal", c.causal);
        c.c_l = j.value("c_l", c.c_l);
        c.c_h = j.value("c_h", c.c_h);
        c.k_blocks = j.value("k_blocks", c.k_blocks);
        c.mdct_bins = j.value("mdct_bins", c.mdct_bins);
        c.latent_dim = j.value("latent_dim", c.latent_dim);
        c.downsample_factor = j.value("downsample_factor", c.downsample_factor);
        c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
        c.updown_kernel = j.value("updown_kernel", c.updown_kernel);
        c.block_kernel = j.value("block_kernel", c.block_kernel);
        c.depthwise = j.value("depthwise", c.depthwise);
        c.cumulative_grn = j.value("cumulative_grn", c.cumulative_grn);
        c.sample_rate = j.value("sample_rate", c.sample_rate);
    } catch (const nlohmann::json::exception & e) {
        throw ConfigError(std::string("codec config: ") + e.what());
    }
    c.validate();
    return c;
}

std::uint64_t fnv1a64(const void * data, std::size_t n, std::uint64_t seed) {
    const auto * p = static_cast<const unsigned char *>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t config_hash(const CodecConfig & cfg) {
    const auto s = config_json(cfg);
    return fnv1a64(s.data(), s.size());
}

template <typename T>
std::vector<NamedParam<T>> CodecModel<T>::named_parameters() const {
    std::vector<NamedParam<T>> out;
    for (const auto * side : {&encoder, &decoder}) {
        for (const auto & m : *side) {
            for (const auto & p : m.params) {
                out.push_back({m.name + "." + p.name, p.tensor});
            }
        }
    }
    return out;
}

template <typename T>
std::vector<Tensor<T>> CodecModel<T>::parameters() const {
    std::vector<Tensor<T>> out;
    for (auto & np : named_parameters()) {
        out.push_back(np.tensor);
    }
    return out;
}

template <typename T>
void CodecModel<T>::set_requires_grad(bool flag) const {
    for (auto & p : parameters()) {
        p.set_requires_grad(flag);
    }
}

std::vector<std::string> tap_names(const CodecConfig & cfg) {
    std::vector<std::string> n{"enc.in"};
    for (std::size_t b = 1; b <= cfg.k_blocks; ++b) {
        n.push_back("enc.block" + std::to_string(b));
    }
    n.push_back("enc.down");
    n.push_back("enc.out");
    n.push_back("dec.in");
    n.push_back("dec.up");
    for (std::size_t b = 1; b <= cfg.k_blocks; ++b) {
        n.push_back("dec.block" + std::to_string(b));
    }
    n.push_back("dec.out");
    return n;
}

namespace {

template <typename T>
struct Init {
    std::mt19937_64 rng;
    std::normal_distribution<double> nd{0.0, 0.02};

    explicit Init(std::uint64_t seed) : rng(seed) {}

    Tensor<T> normal(Shape s) {
        std::vector<T> v(shape_numel(s));
        for (auto & x : v) {
            x = static_cast<T>(nd(rng));
        }
        return Tensor<T>(std::move(s), std::move(v), true);
    }
    static Tensor<T> fill(Shape s, T value) { return Tensor<T>::full(std::move(s), value, true); }
};

template <typename T>
Module<T> conv_module(std::string name, ModuleKind kind, Shape wshape, std::size_t bias, Init<T> & init) {
    Module<T> m{std::move(name), kind, {}};
    m.params.push_back({"weight", init.normal(std::move(wshape))});
    m.params.push_back({"bias", Init<T>::fill({bias}, T(0))});
    return m;
}

template <typename T>
Module<T> block_module(std::string name, const CodecConfig & c, Init<T> & init) {
    Module<T> m{std::move(name), ModuleKind::block, {}};
    const std::size_t cig = c.depthwise ? 1 : c.c_l;
    m.params.push_back({"dwconv.weight", init.normal({c.c_l, cig, c.block_kernel})});
    m.params.push_back({"dwconv.bias", Init<T>::fill({c.c_l}, T(0))});
    m.params.push_back({"norm.gamma", Init<T>::fill({c.c_l}, T(1))});
    m.params.push_back({"norm.beta", Init<T>::fill({c.c_l}, T(0))});
    m.params.push_back({"pw1.weight", init.normal({c.c_h, c.c_l})});
    m.params.push_back({"pw1.bias", Init<T>::fill({c.c_h}, T(0))});
    m.params.push_back({"grn.gamma", Init<T>::fill({c.c_h}, T(0))});
    m.params.push_back({"grn.beta", Init<T>::fill({c.c_h}, T(0))});
    m.params.push_back({"pw2.weight", init.normal({c.c_l, c.c_h})});
    m.params.push_back({"pw2.bias", Init<T>::fill({c.c_l}, T(0))});
    return m;
}

} // namespace

template <typename T>
CodecModel<T> build(const CodecConfig & cfg, std::uint64_t seed) {
    cfg.validate();
    Init<T> init(seed);
    CodecModel<T> m;
    m.config = cfg;
    const auto & c = cfg;
    m.encoder.push_back(conv_module<T>("enc.in", ModuleKind::conv_in, {c.c_l, c.mdct_bins, c.conv_kernel}, c.c_l, init));
    for (std::size_t b = 1; b <= c.k_blocks; ++b) {
        m.encoder.push_back(block_module<T>("enc.block" + std::to_string(b), c, init));
    }
    m.encoder.push_back(conv_module<T>("enc.down", ModuleKind::down, {c.c_l, c.c_l, c.updown_kernel}, c.c_l, init));
    m.encoder.push_back(
        conv_module<T>("enc.out", ModuleKind::conv_out, {c.latent_dim, c.c_l, c.conv_kernel}, c.latent_dim, init));

    m.decoder.push_back(conv_module<T>("dec.in", ModuleKind::conv_in, {c.c_l, c.latent_dim, c.conv_kernel}, c.c_l, init));
    // transposed kernel layout [C_in x C_out x K]
    m.decoder.push_back(conv_module<T>("dec.up", ModuleKind::up, {c.c_l, c.c_l, c.updown_kernel}, c.c_l, init));
    for (std::size_t b = 1; b <= c.k_blocks; ++b) {
        m.decoder.push_back(block_module<T>("dec.block" + std::to_string(b), c, init));
    }
    m.decoder.push_back(
        conv_module<T>("dec.out", ModuleKind::conv_out, {c.mdct_bins, c.c_l, c.conv_kernel}, c.mdct_bins, init));
    return m;
}

template <typename To, typename From>
CodecModel<To> cast_model(const CodecModel<From> & model) {
    CodecModel<To> out;
    out.config = model.config;
    auto conv = [](const std::vector<Module<From>> & src, std::vector<Module<To>> & dst) {
        for (const auto & m : src) {
            Module<To> n{m.name, m.kind, {}};
            for (const auto & p : m.params) {
                auto d = p.tensor.data();
                std::vector<To> v(d.size());
                for (std::size_t i = 0; i < d.size(); ++i) {
                    v[i] = static_cast<To>(d[i]);
                }
                n.params.push_back({p.name, Tensor<To>(p.tensor.shape(), std::move(v), p.tensor.requires_grad())});
            }
            dst.push_back(std::move(n));
        }
    };
    conv(model.encoder, out.encoder);
    conv(model.decoder, out.decoder);
    return out;
}

template <typename T>
Tensor<T> convnext_block(const Module<T> & blk, const Tensor<T> & x, const CodecConfig & cfg) {
    using namespace block_param;
    if (x.rank() != 2 || x.dim(0) != cfg.c_l) {
        throw DimensionError(blk.name + ": expected [" + std::to_string(cfg.c_l) + " x F], got " + shape_str(x.shape()));
    }
    const std::size_t groups = cfg.depthwise ? cfg.c_l : 1;
    auto h = ops::conv1d(x, blk.p(dw_w), blk.p(dw_b), 1, groups, cfg.padding());
    h = ops::transpose(h);
    h = ops::layer_norm(h, blk.p(ln_g), blk.p(ln_b));
    h = ops::linear(h, blk.p(pw1_w), blk.p(pw1_b));
    h = ops::gelu(h);
    h = ops::grn(h, blk.p(grn_g), blk.p(grn_b), cfg.grn_mode());
    h = ops::linear(h, blk.p(pw2_w), blk.p(pw2_b));
    h = ops::transpose(h);
    return ops::add(x, h);
}

namespace {

template <typename T>
Tensor<T> run_module(const Module<T> & m, const Tensor<T> & x, const CodecConfig & cfg) {
    switch (m.kind) {
    case ModuleKind::conv_in:
    case ModuleKind::conv_out:
        return ops::conv1d(x, m.p(0), m.p(1), 1, 1, cfg.padding());
    case ModuleKind::down:
        return ops::conv1d(x, m.p(0), m.p(1), cfg.downsample_factor, 1, cfg.padding());
    case ModuleKind::up:
        return ops::conv_transpose1d(x, m.p(0), m.p(1), cfg.downsample_factor, cfg.padding());
    case ModuleKind::block:
        return convnext_block(m, x, cfg);
    }
    throw ContractError("unknown module kind");
}

} // namespace

template <typename T>
Tensor<T> encode(const CodecModel<T> & model, const Tensor<T> & spec, TapSet<T> * taps) {
    if (spec.rank() != 2 || spec.dim(0) != model.config.mdct_bins) {
        throw DimensionError("encode: expected [" + std::to_string(model.config.mdct_bins) + " x F] spectrum, got " +
                             shape_str(spec.shape()));
    }
    Tensor<T> h = spec;
    for (const auto & m : model.encoder) {
        h = run_module(m, h, model.config);
        if (taps) {
            taps->add(m.name, h);
        }
    }
    return h;
}

template <typename T>
Tensor<T> decode(const CodecModel<T> & model, const Tensor<T> & latent, TapSet<T> * taps) {
    if (latent.rank() != 2 || latent.dim(0) != model.config.latent_dim) {
        throw DimensionError("decode: expected [" + std::to_string(model.config.latent_dim) + " x F] latent, got " +
                             shape_str(latent.shape()));
    }
    Tensor<T> h = latent;
    for (const auto & m : model.decoder) {
        h = run_module(m, h, model.config);
        if (taps) {
            taps->add(m.name, h);
        }
    }
    return h;
}

namespace {

template <typename T>
CountReport params_impl(const CodecModel<T> & model) {
    CountReport r;
    for (const auto * side : {&model.encoder, &model.decoder}) {
        for (const auto & m : *side) {
            std::uint64_t n = 0;
            for (const auto & p : m.params) {
                n += p.tensor.numel();
            }
            r.modules.push_back({m.name, n});
            r.total += n;
        }
    }
    return r;
}

} // namespace

CountReport count_params(const CodecModel<float> & model) { return params_impl(model); }
CountReport count_params(const CodecModel<double> & model) { return params_impl(model); }

CountReport count_flops_per_second(const CodecConfig & c, std::size_t hop) {
    c.validate();
    if (hop == 0 || c.sample_rate % (hop * c.downsample_factor) != 0) {
        throw ConfigError("frame rates must be integral");
    }
    const std::uint64_t fr = c.sample_rate / hop;            // spectrum frames per second
    const std::uint64_t lr = fr / c.downsample_factor;       // latent frames per second
    const std::uint64_t cl = c.c_l, ch = c.c_h;
    const std::uint64_t cig = c.depthwise ? 1 : cl;
    const std::uint64_t block_frame = 2 * cl * cig * c.block_kernel // block conv
                                      + flop_cost::layer_norm * cl  //
                                      + 2 * cl * ch                 // pw1
                                      + flop_cost::activation * ch  // gelu
                                      + flop_cost::grn * ch         //
                                      + 2 * ch * cl                 // pw2
                                      + flop_cost::residual * cl;
    CountReport r;
    auto add = [&](std::string name, std::uint64_t v) {
        r.modules.push_back({std::move(name), v});
        r.total += v;
    };
    add("enc.in", 2 * c.mdct_bins * cl * c.conv_kernel * fr);
    for (std::size_t b = 1; b <= c.k_blocks; ++b) {
        add("enc.block" + std::to_string(b), block_frame * fr);
    }
    add("enc.down", 2 * cl * cl * c.updown_kernel * lr);
    add("enc.out", 2 * cl * c.latent_dim * c.conv_kernel * lr);
    add("dec.in", 2 * c.latent_dim * cl * c.conv_kernel * lr);
    // each latent frame scatters a full kernel
    add("dec.up", 2 * cl * cl * c.updown_kernel * lr);
    for (std::size_t b = 1; b <= c.k_blocks; ++b) {
        add("dec.block" + std::to_string(b), block_frame * fr);
    }
    add("dec.out", 2 * cl * c.mdct_bins * c.conv_kernel * fr);
    return r;
}

double count_flops(const CodecConfig & cfg, double seconds, std::size_t hop) {
    return static_cast<double>(count_flops_per_second(cfg, hop).total) * seconds;
}

#define SC2_INSTANTIATE_MODEL(T)                                                                                   \
    template struct CodecModel<T>;                                                                                 \
    template CodecModel<T> build<T>(const CodecConfig &, std::uint64_t);                                           \
    template Tensor<T> convnext_block<T>(const Module<T> &, const Tensor<T> &, const CodecConfig &);               \
    template Tensor<T> encode<T>(const CodecModel<T> &, const Tensor<T> &, TapSet<T> *);                           \
    template Tensor<T> decode<T>(const CodecModel<T> &, const Tensor<T> &, TapSet<T> *);

SC2_INSTANTIATE_MODEL(float)
SC2_INSTANTIATE_MODEL(double)

template CodecModel<double> cast_model<double, float>(const CodecModel<float> &);
template CodecModel<float> cast_model<float, double>(const CodecModel<double> &);
template CodecModel<float> cast_model<float, float>(const CodecModel<float> &);

} // namespace sc2
