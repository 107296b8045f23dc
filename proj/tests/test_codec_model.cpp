#include "doctest.h"

#include "sc2/codec_model.hpp"
#include "sc2/error.hpp"
#include "sc2/grad_check.hpp"

#include <random>
#include <set>

using namespace sc2;

namespace {

Tensor32 rand_spec(std::size_t bins, std::size_t frames, std::uint64_t seed, float scale = 0.1f) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd(0.0f, scale);
    std::vector<float> v(bins * frames);
    for (auto & x : v) {
        x = nd(rng);
    }
    return Tensor32({bins, frames}, v);
}

// parameter count of one block, enumerated layer by layer
std::uint64_t block_params_oracle(std::uint64_t cl, std::uint64_t ch, std::uint64_t k) {
    const std::uint64_t dw = k * cl + cl;
    const std::uint64_t ln = 2 * cl;
    const std::uint64_t pw1 = cl * ch + ch;
    const std::uint64_t grn = 2 * ch;
    const std::uint64_t pw2 = ch * cl + cl;
    return dw + ln + pw1 + grn + pw2;
}

std::uint64_t model_params_oracle(const CodecConfig & c) {
    auto conv = [](std::uint64_t ci, std::uint64_t co, std::uint64_t k) { return ci * co * k + co; };
    return conv(c.mdct_bins, c.c_l, c.conv_kernel) + conv(c.c_l, c.c_l, c.updown_kernel) +
           conv(c.c_l, c.latent_dim, c.conv_kernel) + conv(c.latent_dim, c.c_l, c.conv_kernel) +
           conv(c.c_l, c.c_l, c.updown_kernel) + conv(c.c_l, c.mdct_bins, c.conv_kernel) +
           2 * c.k_blocks * block_params_oracle(c.c_l, c.c_h, c.block_kernel);
}

// FLOPs recomputed from the built model's tensor shapes: every weight
// element is one MAC per produced (or, for the transposed conv, consumed)
// frame; elementwise charges applied to the widths they touch.
std::uint64_t flops_from_shapes(const CodecModel<float> & m, std::uint64_t fr) {
    std::uint64_t total = 0;
    for (const auto * side : {&m.encoder, &m.decoder}) {
        std::uint64_t rate = side == &m.encoder ? fr : fr / 2;
        for (const auto & mod : *side) {
            const auto & w = mod.p(0);
            switch (mod.kind) {
            case ModuleKind::conv_in:
            case ModuleKind::conv_out:
                total += 2 * w.numel() * rate;
                break;
            case ModuleKind::down:
                rate /= 2;
                total += 2 * w.numel() * rate;
                break;
            case ModuleKind::up:
                total += 2 * w.numel() * rate;
                rate *= 2;
                break;
            case ModuleKind::block: {
                const std::uint64_t cl = mod.p(block_param::ln_g).numel();
                const std::uint64_t ch = mod.p(block_param::grn_g).numel();
                total += rate * (2 * w.numel() + 2 * mod.p(block_param::pw1_w).numel() +
                                 2 * mod.p(block_param::pw2_w).numel() + 5 * cl + 1 * ch + 4 * ch + 1 * cl);
                break;
            }
            }
        }
    }
    return total;
}

} // namespace

TEST_CASE("presets build with 2K+6 taps") {
    for (const auto & name : preset_names()) {
        auto cfg = preset(name);
        auto m = build<float>(cfg, 1);
        CHECK(cfg.tap_count() == 2 * cfg.k_blocks + 6);
        auto spec = rand_spec(160, 20, 2);
        TapSet<float> taps;
        auto z = encode(m, spec, &taps);
        auto y = decode(m, z, &taps);
        CHECK(taps.size() == cfg.tap_count());
        CHECK(taps.names == tap_names(cfg));
        CHECK(z.shape() == Shape{64, 10});
        CHECK(y.shape() == Shape{160, 20});
    }
    CHECK(preset("student").tap_count() == 22);
    CHECK(preset("teacher").tap_count() == 22);
    CHECK(preset("teacher").c_l == 256);
    CHECK(preset("teacher").c_h == 512);
    CHECK_FALSE(preset("teacher").causal);
    CHECK(preset("student").c_l == 200);
    CHECK(preset("student").c_h == 400);
}

TEST_CASE("invalid configs are rejected") {
    auto c = preset("student");
    c.c_h = 100;
    CHECK_THROWS_AS(build<float>(c, 1), ConfigError);
    c = preset("student");
    c.k_blocks = 0;
    CHECK_THROWS_AS(build<float>(c, 1), ConfigError);
    CHECK_THROWS_AS(preset("bogus"), ConfigError);
}

TEST_CASE("build is deterministic given the seed") {
    auto cfg = preset("toy-student");
    auto a = build<float>(cfg, 7), b = build<float>(cfg, 7), c = build<float>(cfg, 8);
    auto pa = a.named_parameters(), pb = b.named_parameters(), pc = c.named_parameters();
    REQUIRE(pa.size() == pb.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
        any_diff = any_diff ||
                   !std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pc[i].tensor.data().begin());
    }
    CHECK(any_diff);
}

TEST_CASE("mirror symmetry and unique names") {
    auto m = build<float>(preset("toy-student"), 1);
    auto mirror = [](ModuleKind k) {
        switch (k) {
        case ModuleKind::conv_in:
            return ModuleKind::conv_out;
        case ModuleKind::conv_out:
            return ModuleKind::conv_in;
        case ModuleKind::up:
            return ModuleKind::down;
        default:
            return k;
        }
    };
    std::vector<ModuleKind> enc, dec;
    for (auto & x : m.encoder) {
        enc.push_back(x.kind);
    }
    for (auto it = m.decoder.rbegin(); it != m.decoder.rend(); ++it) {
        dec.push_back(mirror(it->kind));
    }
    CHECK(enc == dec);
    auto names = m.named_parameters();
    std::set<std::string> uniq;
    for (auto & p : names) {
        uniq.insert(p.name);
    }
    CHECK(uniq.size() == names.size());
}

TEST_CASE("block with zero weights is the identity") {
    auto cfg = preset("toy-student");
    auto m = build<float>(cfg, 3);
    const auto & blk = m.encoder[1];
    auto zeroed = blk;
    for (auto & p : zeroed.params) {
        auto d = p.tensor.clone();
        auto w = d.mutable_data();
        const bool gamma = p.name == "norm.gamma";
        std::fill(w.begin(), w.end(), gamma ? 1.0f : 0.0f);
        p.tensor = d;
    }
    auto x = rand_spec(cfg.c_l, 12, 4, 1.0f);
    auto y = convnext_block(zeroed, x, cfg);
    CHECK(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
    CHECK_THROWS_AS(convnext_block(blk, rand_spec(cfg.c_l + 1, 4, 1), cfg), DimensionError);
}

TEST_CASE("block causality") {
    auto cfg = preset("toy-student");
    auto m = build<float>(cfg, 4);
    // make GRN active so the running norm path is exercised
    for (auto & p : m.encoder[1].params) {
        if (p.name.rfind("grn", 0) == 0) {
            auto w = p.tensor.mutable_data();
            for (std::size_t i = 0; i < w.size(); ++i) {
                w[i] = 0.1f * static_cast<float>(i % 7) - 0.3f;
            }
        }
    }
    auto x = rand_spec(cfg.c_l, 16, 5, 1.0f);
    auto full = convnext_block(m.encoder[1], x, cfg);
    for (std::size_t g = 0; g < 16; ++g) {
        std::vector<float> cut(x.data().begin(), x.data().end());
        for (std::size_t c = 0; c < cfg.c_l; ++c) {
            for (std::size_t f = g + 1; f < 16; ++f) {
                cut[c * 16 + f] = 0.0f;
            }
        }
        auto part = convnext_block(m.encoder[1], Tensor32(x.shape(), cut), cfg);
        for (std::size_t c = 0; c < cfg.c_l; ++c) {
            for (std::size_t f = 0; f <= g; ++f) {
                CHECK(part.at({c, f}) == full.at({c, f}));
            }
        }
    }
}

TEST_CASE("encoder and decoder causality probes") {
    auto cfg = preset("toy-student");
    auto m = build<float>(cfg, 6);
    auto spec = rand_spec(160, 40, 7);
    auto z = encode(m, spec);
    auto y = decode(m, z);
    std::mt19937_64 rng(8);
    for (int probe = 0; probe < 10; ++probe) {
        const std::size_t g = rng() % 40;
        std::vector<float> v(spec.data().begin(), spec.data().end());
        for (std::size_t c = 0; c < 160; ++c) {
            v[c * 40 + g] += 1.0f;
        }
        auto z2 = encode(m, Tensor32(spec.shape(), v));
        for (std::size_t t = 0; t < 20; ++t) {
            bool same = true;
            for (std::size_t c = 0; c < 64; ++c) {
                same = same && z2.at({c, t}) == z.at({c, t});
            }
            if (2 * t < g) {
                CHECK(same);
            }
            if (t == (g + 1) / 2) {
                CHECK_FALSE(same);
            }
        }
        const std::size_t lt = rng() % 20;
        std::vector<float> lz(z.data().begin(), z.data().end());
        for (std::size_t c = 0; c < 64; ++c) {
            lz[c * 20 + lt] += 1.0f;
        }
        auto y2 = decode(m, Tensor32(z.shape(), lz));
        for (std::size_t j = 0; j < 40; ++j) {
            bool same = true;
            for (std::size_t c = 0; c < 160; ++c) {
                same = same && y2.at({c, j}) == y.at({c, j});
            }
            if (j / 2 < lt) {
                CHECK(same);
            }
        }
    }
}

TEST_CASE("encode and decode shapes") {
    auto m = build<float>(preset("toy-student"), 1);
    auto z = encode(m, rand_spec(160, 100, 1));
    CHECK(z.shape() == Shape{64, 50});
    CHECK(decode(m, z).shape() == Shape{160, 100});
    CHECK(encode(m, rand_spec(160, 7, 1)).shape() == Shape{64, 4});
    CHECK_THROWS_AS(encode(m, rand_spec(80, 10, 1)), DimensionError);
    CHECK_THROWS_AS(decode(m, rand_spec(32, 10, 1)), DimensionError);
    // zero spectrum with zero biases -> zero latent, and repeatable
    auto z0 = encode(m, Tensor32::zeros({160, 10}));
    auto z1 = encode(m, Tensor32::zeros({160, 10}));
    CHECK(std::equal(z0.data().begin(), z0.data().end(), z1.data().begin()));
}

TEST_CASE("zero latent gives a bias-determined constant output") {
    auto cfg = preset("toy-student");
    auto m = build<float>(cfg, 2);
    std::mt19937_64 rng(3);
    std::normal_distribution<float> nd(0.0f, 0.1f);
    for (auto & mod : m.decoder) {
        for (auto & p : mod.params) {
            if (p.name.find("bias") != std::string::npos) {
                for (auto & w : p.tensor.mutable_data()) {
                    w = nd(rng);
                }
            }
        }
    }
    auto y = decode(m, Tensor32::zeros({64, 30}));
    // past the zero-padded warm-up every frame of a given upsampling phase is identical
    for (std::size_t c = 0; c < 160; ++c) {
        for (std::size_t f = 40; f < 58; ++f) {
            CHECK(y.at({c, f}) == doctest::Approx(y.at({c, f + 2})).epsilon(1e-5));
        }
    }
    bool nonzero = false;
    for (float v : y.data()) {
        nonzero = nonzero || v != 0.0f;
    }
    CHECK(nonzero);
}

TEST_CASE("parameter counts match the analytic oracle") {
    auto student = build<float>(preset("student"), 1);
    auto r = count_params(student);
    std::uint64_t block_sum = 0, sum = 0;
    for (auto & mc : r.modules) {
        sum += mc.value;
        if (mc.name.find("block") != std::string::npos) {
            CHECK(mc.value == block_params_oracle(200, 400, 7));
            block_sum += mc.value;
        }
    }
    CHECK(block_params_oracle(200, 400, 7) == 163400);
    CHECK(block_sum == 16 * 163400);
    CHECK(sum == r.total);
    CHECK(r.total == model_params_oracle(preset("student")));
    CHECK(r.total == [&] {
        std::uint64_t n = 0;
        for (auto & p : student.parameters()) {
            n += p.numel();
        }
        return n;
    }());
    auto teacher = build<float>(preset("teacher"), 1);
    CHECK(count_params(teacher).total == model_params_oracle(preset("teacher")));
    CHECK(count_params(teacher).total > r.total);
    for (const auto & name : preset_names()) {
        CHECK(count_params(build<float>(preset(name), 1)).total == model_params_oracle(preset(name)));
    }
}

TEST_CASE("flop counts match shape-derived oracle") {
    for (const auto & name : preset_names()) {
        auto cfg = preset(name);
        auto m = build<float>(cfg, 1);
        CHECK(count_flops_per_second(cfg).total == flops_from_shapes(m, 100));
    }
    // a single c_l -> c_h linear at 100 frames/s
    CHECK(2ULL * 200 * 400 * 100 == 16000000ULL);
    auto s = preset("student"), t = preset("teacher");
    CHECK(count_flops(t, 1.0) > count_flops(s, 1.0));
    CHECK(count_flops(s, 2.0) == 2.0 * count_flops(s, 1.0));
    auto per = count_flops_per_second(s);
    std::uint64_t sum = 0;
    for (auto & mc : per.modules) {
        sum += mc.value;
    }
    CHECK(sum == per.total);
}

TEST_CASE("config json round trip and hash") {
    for (const auto & name : preset_names()) {
        auto c = preset(name);
        auto back = config_from_json(config_json(c));
        CHECK(config_json(back) == config_json(c));
        CHECK(config_hash(back) == config_hash(c));
    }
    CHECK(config_hash(preset("student")) != config_hash(preset("teacher")));
    CHECK_THROWS_AS(config_from_json(R"({"c_l": 10, "bogus": 1})"), ConfigError);
    CHECK_THROWS_AS(config_from_json("not json"), ConfigError);
}

TEST_CASE("block gradients") {
    CodecConfig cfg = preset("toy-student");
    cfg.c_l = 4;
    cfg.c_h = 6;
    for (bool causal : {true, false}) {
        cfg.causal = causal;
        auto m = build<double>(cfg, 9);
        auto blk = m.encoder[1];
        std::mt19937_64 rng(10);
        std::normal_distribution<double> nd(0.0, 0.5);
        for (auto & p : blk.params) {
            for (auto & w : p.tensor.mutable_data()) {
                w += nd(rng);
            }
        }
        std::vector<double> xv(4 * 10), q(4 * 10);
        for (auto & v : xv) {
            v = nd(rng);
        }
        for (auto & v : q) {
            v = nd(rng);
        }
        Tensor64 x({4, 10}, xv, true), probe({4, 10}, q);
        std::vector<Tensor64> params{x};
        for (auto & p : blk.params) {
            params.push_back(p.tensor);
        }
        auto r = grad_check([&] { return ops::sum(ops::mul(convnext_block(blk, x, cfg), probe)); }, params, 1e-4);
        CHECK_MESSAGE(r.passed, describe(r));
    }
}

TEST_CASE("cast_model preserves values") {
    auto m = build<float>(preset("toy-student"), 5);
    auto d = cast_model<double>(m);
    auto pm = m.parameters();
    auto pd = d.parameters();
    REQUIRE(pm.size() == pd.size());
    for (std::size_t i = 0; i < pm.size(); ++i) {
        for (std::size_t j = 0; j < pm[i].numel(); ++j) {
            CHECK(static_cast<double>(pm[i].data()[j]) == pd[i].data()[j]);
        }
    }
}
