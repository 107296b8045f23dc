#include "doctest.h"

#include "sc2/bitstream.hpp"
#include "sc2/checkpoint.hpp"
#include "sc2/cli.hpp"
#include "sc2/wav.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sc2;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run tool(const std::vector<std::string> & args) {
    std::ostringstream o, e;
    const int c = run_cli(args, o, e);
    return {c, o.str(), e.str()};
}

std::vector<char> slurp(const fs::path & p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// fresh scratch directory per test case
struct Scratch {
    fs::path root;
    explicit Scratch(const std::string & name) : root(fs::temp_directory_path() / name) {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Scratch() { fs::remove_all(root); }
    std::string operator/(const std::string & rel) const { return (root / rel).string(); }
};

} // namespace

TEST_CASE("cli: synth, train 200 steps, encode, decode, eval") {
    Scratch s("sc2_cli_e2e");
    REQUIRE(tool({"synth-dataset", "--seed", "4", "--count", "2", "--seconds", "1", "--output", s / "ref"}).code == 0);
    std::ofstream(s / "exp.json") << R"({"scheme": "none", "steps": 200, "seed": 3,
        "dataset": {"train_dir": ")" << s / "ref" << R"(", "val_count": 1}})";
    const auto t = tool({"train", "--config", s / "exp.json", "--output-dir", s / "run"});
    REQUIRE(t.code == 0);
    CHECK(fs::exists(s / "run/metrics.jsonl"));
    CHECK(fs::exists(s / "run/summary.json"));

    const auto e = tool({"encode", "--input", s / "ref/utt_0000.wav", "--model", s / "run/student.ckpt", "--output",
                        s / "a.sc2"});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("frames 50\n") != std::string::npos);
    CHECK(e.out.find("bitrate_bps 1700.0") != std::string::npos);
    fs::create_directories(s / "hyp");
    for (const char * f : {"utt_0000.wav", "utt_0001.wav"}) {
        REQUIRE(tool({"encode", "--input", s / ("ref/" + std::string(f)), "--model", s / "run/student.ckpt",
                     "--output", s / "x.sc2"})
                    .code == 0);
        REQUIRE(tool({"decode", "--input", s / "x.sc2", "--model", s / "run/student.ckpt", "--output",
                     s / ("hyp/" + std::string(f))})
                    .code == 0);
    }
    CHECK(read_wav(s / "hyp/utt_0000.wav").samples.size() == 16000);
    const auto ev = tool({"eval", "--ref", s / "ref", "--hyp", s / "hyp", "--json", s / "eval.json"});
    REQUIRE(ev.code == 0);
    CHECK(ev.out.find("mean\t") != std::string::npos);
    CHECK(fs::exists(s / "eval.json"));

    SUBCASE("same inputs give byte-identical outputs") {
        REQUIRE(tool({"encode", "--input", s / "ref/utt_0000.wav", "--model", s / "run/student.ckpt", "--output",
                     s / "b.sc2"})
                    .code == 0);
        CHECK(slurp(s / "a.sc2") == slurp(s / "b.sc2"));
        tool({"synth-dataset", "--seed", "4", "--count", "2", "--seconds", "1", "--output", s / "ref2"});
        CHECK(slurp(s / "ref/utt_0001.wav") == slurp(s / "ref2/utt_0001.wav"));
        tool({"train", "--config", s / "exp.json", "--output-dir", s / "run2"});
        CHECK(slurp(s / "run/student.ckpt") == slurp(s / "run2/student.ckpt"));
        CHECK(slurp(s / "run/metrics.jsonl") == slurp(s / "run2/metrics.jsonl"));
    }

    SUBCASE("refusals") {
        // unpaired eval
        fs::remove(s / "hyp/utt_0001.wav");
        const auto u = tool({"eval", "--ref", s / "ref", "--hyp", s / "hyp"});
        CHECK(u.code == 2);
        CHECK(u.err.find("utt_0001.wav") != std::string::npos);
        // wrong rate
        {
            auto bytes = wav_bytes(std::vector<float>(100), 8000);
            std::ofstream(s / "r8k.wav", std::ios::binary).write(reinterpret_cast<const char *>(bytes.data()),
                                                                  static_cast<std::streamsize>(bytes.size()));
        }
        const auto r = tool({"encode", "--input", s / "r8k.wav", "--model", s / "run/student.ckpt", "--output",
                            s / "c.sc2"});
        CHECK(r.code == 2);
        CHECK(r.err.find("sox") != std::string::npos);
        // non-causal checkpoint
        save_checkpoint(s / "teacher.ckpt", init_checkpoint(preset("toy-teacher"), QuantizerConfig{}, 1));
        const auto nc = tool({"encode", "--input", s / "ref/utt_0000.wav", "--model", s / "teacher.ckpt", "--output",
                             s / "c.sc2"});
        CHECK(nc.code == 2);
        CHECK(nc.err.find("not causal") != std::string::npos);
        // bitstream from another model
        save_checkpoint(s / "other.ckpt", init_checkpoint(preset("toy-CH"), QuantizerConfig{}, 1));
        const auto hm = tool({"decode", "--input", s / "a.sc2", "--model", s / "other.ckpt", "--output", s / "o.wav"});
        CHECK(hm.code == 2);
        CHECK(hm.err.find("hash") != std::string::npos);
        // truncated bitstream
        auto bytes = slurp(s / "a.sc2");
        bytes.resize(bytes.size() - 3);
        std::ofstream(s / "t.sc2", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        const auto tr = tool({"decode", "--input", s / "t.sc2", "--model", s / "run/student.ckpt", "--output",
                             s / "o.wav"});
        CHECK(tr.code == 2);
        CHECK(tr.err.find("byte offset") != std::string::npos);
    }

    SUBCASE("empty WAV gives a valid empty bitstream") {
        write_wav(s / "empty.wav", {});
        const auto r = tool({"encode", "--input", s / "empty.wav", "--model", s / "run/student.ckpt", "--output",
                            s / "e.sc2"});
        REQUIRE(r.code == 0);
        CHECK(r.out.find("frames 0\n") != std::string::npos);
        CHECK(fs::file_size(s / "e.sc2") == bitstream_header_bytes);
        CHECK(read_bitstream_file(s / "e.sc2").tokens.empty());
        REQUIRE(tool({"decode", "--input", s / "e.sc2", "--model", s / "run/student.ckpt", "--output", s / "e.wav"})
                    .code == 0);
        CHECK(read_wav(s / "e.wav").samples.empty());
    }
}

TEST_CASE("cli: report and t-test") {
    const auto r = tool({"report", "--preset", "student"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("taps 22\n") != std::string::npos);
    CHECK(r.out.find("frame_latency 320 samples (20.0 ms)") != std::string::npos);
    CHECK(r.out.find("first_output_delay 480 samples") != std::string::npos);
    auto params = [](const std::string & out) {
        const auto at = out.find("params ");
        return std::stoull(out.substr(at + 7));
    };
    const auto t = tool({"report", "--preset", "teacher"});
    CHECK(params(t.out) > params(r.out));
    CHECK(t.out.find("n/a") != std::string::npos);

    Scratch s("sc2_cli_ttest");
    std::ofstream(s / "a.txt") << "1 2 3 4\n";
    std::ofstream(s / "b.txt") << "2 2 5 5\n";
    const auto tt = tool({"t-test", "--a", s / "a.txt", "--b", s / "b.txt"});
    REQUIRE(tt.code == 0);
    CHECK(tt.out.find("t -2.44948974") != std::string::npos);
    std::ofstream(s / "c.txt") << "1 2\n";
    CHECK(tool({"t-test", "--a", s / "a.txt", "--b", s / "c.txt"}).code == 2);
    CHECK(tool({"nonsense"}).code != 0);
    CHECK(tool({}).code != 0);
}
