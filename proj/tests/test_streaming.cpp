#include "doctest.h"

#include "sc2/codec.hpp"
#include "sc2/error.hpp"
#include "sc2/streaming.hpp"

#include <random>

using namespace sc2;

namespace {

struct Fixture {
    CodecModel<float> model;
    Quantizer<float> quant;

    explicit Fixture(const std::string & name, std::uint64_t seed = 1) {
        model = build<float>(preset(name), seed);
        QuantizerConfig qc;
        qc.latent_dim = model.config.latent_dim;
        quant = build_quantizer<float>(qc, seed + 1);
        // larger projections so the SQ symbols actually vary
        for (auto * t : {&quant.down_w, &quant.up_w}) {
            for (auto & v : t->mutable_data()) {
                v *= 20.f;
            }
        }
    }
};

std::vector<float> noise(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd(0.f, 0.3f);
    std::vector<float> v(n);
    for (auto & x : v) {
        x = nd(rng);
    }
    return v;
}

std::vector<TokenFrame> stream_encode(StreamEncoder<float> & enc, const std::vector<float> & x, std::mt19937_64 & rng,
                                      std::size_t max_chunk) {
    std::uniform_int_distribution<std::size_t> chunk(0, max_chunk);
    std::vector<TokenFrame> out;
    std::size_t at = 0;
    while (at < x.size()) {
        const std::size_t n = std::min(chunk(rng), x.size() - at);
        auto t = enc.push(std::span<const float>(x.data() + at, n));
        out.insert(out.end(), t.begin(), t.end());
        at += n;
    }
    auto t = enc.finish();
    out.insert(out.end(), t.begin(), t.end());
    return out;
}

std::vector<float> stream_decode(StreamDecoder<float> & dec, const std::vector<TokenFrame> & toks,
                                 std::mt19937_64 & rng) {
    std::uniform_int_distribution<std::size_t> chunk(0, 4);
    std::vector<float> out;
    std::size_t at = 0;
    while (at < toks.size()) {
        const std::size_t n = std::min(chunk(rng), toks.size() - at);
        auto y = dec.push(std::span<const TokenFrame>(toks.data() + at, n));
        out.insert(out.end(), y.begin(), y.end());
        at += n;
    }
    auto y = dec.finish();
    out.insert(out.end(), y.begin(), y.end());
    return out;
}

} // namespace

TEST_CASE("streaming equals offline on the toy model") {
    Fixture fx("toy-student");
    std::mt19937_64 rng(3);
    for (std::size_t trial = 0; trial < 12; ++trial) {
        const std::size_t len = 200 + 977 * trial;
        const auto x = noise(len, trial);
        const auto offline = encode_audio<float>(fx.model, fx.quant, x);
        CHECK(offline.size() == token_count(len, fx.model.config));
        StreamEncoder<float> enc(fx.model, fx.quant);
        const auto streamed = stream_encode(enc, x, rng, trial % 2 ? 1 : 700);
        REQUIRE(streamed == offline);

        const auto y_off = decode_tokens(fx.model, fx.quant, offline);
        CHECK(y_off.size() == offline.size() * 320);
        StreamDecoder<float> dec(fx.model, fx.quant);
        const auto y = stream_decode(dec, offline, rng);
        REQUIRE(y.size() == y_off.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            REQUIRE(y[i] == y_off[i]);
        }
    }
}

TEST_CASE("streaming equals offline on the full student") {
    Fixture fx("student", 9);
    const auto x = noise(4000, 5);
    std::mt19937_64 rng(1);
    StreamEncoder<float> enc(fx.model, fx.quant);
    const auto offline = encode_audio<float>(fx.model, fx.quant, x);
    CHECK(stream_encode(enc, x, rng, 333) == offline);
    StreamDecoder<float> dec(fx.model, fx.quant);
    CHECK(stream_decode(dec, offline, rng) == decode_tokens(fx.model, fx.quant, offline));
}

TEST_CASE("token emission schedule") {
    Fixture fx("toy-student");
    StreamEncoder<float> enc(fx.model, fx.quant);
    CHECK(enc.push({}).empty());
    CHECK(enc.samples_consumed() == 0);
    std::vector<float> z(159, 0.f);
    CHECK(enc.push(z).empty());
    float one = 0.f;
    CHECK(enc.push(std::span<const float>(&one, 1)).size() == 1); // sample 160
    std::vector<float> more(319, 0.f);
    CHECK(enc.push(more).empty());
    CHECK(enc.push(std::span<const float>(&one, 1)).size() == 1); // sample 480

    StreamEncoder<float> sec(fx.model, fx.quant);
    const auto x = noise(16000, 2);
    CHECK(sec.push(x).size() == 50);
    CHECK(sec.finish().empty());
}

TEST_CASE("decoder emission schedule") {
    Fixture fx("toy-student");
    StreamDecoder<float> dec(fx.model, fx.quant);
    CHECK(dec.push({}).empty());
    TokenFrame t;
    CHECK(dec.push(std::span<const TokenFrame>(&t, 1)).empty());
    CHECK(dec.push(std::span<const TokenFrame>(&t, 1)).size() == 320);
    CHECK(dec.finish().size() == 320);
    // all-zero tokens decode deterministically
    StreamDecoder<float> d2(fx.model, fx.quant);
    std::vector<TokenFrame> toks(3);
    auto a = d2.push(toks);
    auto b = d2.finish();
    a.insert(a.end(), b.begin(), b.end());
    CHECK(a == decode_tokens(fx.model, fx.quant, toks));
}

TEST_CASE("reset and state isolation") {
    Fixture fx("toy-student");
    const auto x = noise(3000, 7), y = noise(2500, 8);
    StreamEncoder<float> a(fx.model, fx.quant);
    auto first = a.push(x);
    auto f2 = a.finish();
    first.insert(first.end(), f2.begin(), f2.end());
    a.reset();
    auto again = a.push(x);
    auto g2 = a.finish();
    again.insert(again.end(), g2.begin(), g2.end());
    CHECK(first == again);

    StreamEncoder<float> s1(fx.model, fx.quant), s2(fx.model, fx.quant);
    std::vector<TokenFrame> o1, o2;
    for (std::size_t at = 0; at < 3000; at += 100) {
        auto t1 = s1.push(std::span<const float>(x.data() + at, 100));
        o1.insert(o1.end(), t1.begin(), t1.end());
        if (at < 2500) {
            auto t2 = s2.push(std::span<const float>(y.data() + at, 100));
            o2.insert(o2.end(), t2.begin(), t2.end());
        }
    }
    auto e1 = s1.finish(), e2 = s2.finish();
    o1.insert(o1.end(), e1.begin(), e1.end());
    o2.insert(o2.end(), e2.begin(), e2.end());
    CHECK(o1 == encode_audio<float>(fx.model, fx.quant, x));
    CHECK(o2 == encode_audio<float>(fx.model, fx.quant, y));
}

TEST_CASE("non-causal and global-GRN models are refused") {
    Fixture fx("teacher");
    CHECK_THROWS_AS(StreamEncoder<float>(fx.model, fx.quant), UnsupportedVariantError);
    CHECK_THROWS_AS(StreamDecoder<float>(fx.model, fx.quant), UnsupportedVariantError);
    auto cfg = preset("toy-student");
    cfg.cumulative_grn = false;
    auto m = build<float>(cfg, 1);
    CHECK_THROWS_AS(StreamEncoder<float>(m, fx.quant), UnsupportedVariantError);
}

TEST_CASE("latency report") {
    Fixture fx("toy-student");
    const auto r = measure_latency(fx.model, fx.quant);
    CHECK(r.frame_latency_samples == 320);
    CHECK(r.frame_latency_ms == doctest::Approx(20.0));
    CHECK(r.first_output_delay_samples == 480);
    CHECK(r.encoder_priming_samples == 160);
}

TEST_CASE("length bookkeeping") {
    Fixture fx("toy-student");
    for (std::size_t len : {0u, 1u, 160u, 320u, 321u, 16000u, 16100u}) {
        const auto toks = encode_audio<float>(fx.model, fx.quant, noise(len, len));
        CHECK(toks.size() == token_count(len, fx.model.config));
        const auto y = decode_tokens(fx.model, fx.quant, toks);
        CHECK(y.size() == toks.size() * 320);
        CHECK(y.size() >= len);
        CHECK(y.size() - len < 320);
    }
}
