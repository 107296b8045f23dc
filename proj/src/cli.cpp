#include "sc2/cli.hpp"

#include "sc2/bitstream.hpp"
#include "sc2/codec.hpp"
#include "sc2/error.hpp"
#include "sc2/experiment.hpp"
#include "sc2/metrics.hpp"
#include "sc2/streaming.hpp"
#include "sc2/synth.hpp"
#include "sc2/wav.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

namespace sc2 {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char * f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void require_streamable(const CodecConfig & c) {
    if (!c.causal || !c.cumulative_grn) {
        throw UnsupportedVariantError("model '" + c.name + "' is not causal; only causal checkpoints can be encoded");
    }
}

int cmd_encode(const std::string & input, const std::string & model_path, const std::string & output,
               std::ostream & out) {
    const auto ckpt = load_checkpoint(model_path);
    require_streamable(ckpt.model.config);
    const auto wav = read_wav(input, static_cast<std::uint32_t>(ckpt.model.config.sample_rate));
    const auto tokens = encode_audio<float>(ckpt.model, ckpt.quantizer, wav.samples);
    BitstreamHeader h;
    h.sample_rate = static_cast<std::uint32_t>(ckpt.model.config.sample_rate);
    h.hop = static_cast<std::uint16_t>(ckpt.model.config.mdct_bins);
    h.downsample_factor = static_cast<std::uint8_t>(ckpt.model.config.downsample_factor);
    h.bits_per_frame = static_cast<std::uint8_t>(ckpt.quantizer.config.bits_per_frame());
    h.frame_count = tokens.size();
    h.config_hash = config_hash(ckpt.model.config);
    write_bitstream_file(output, h, tokens);
    const double frame_s = static_cast<double>(h.hop * h.downsample_factor) / h.sample_rate;
    out << "frames " << tokens.size() << "\n";
    out << "bytes " << fs::file_size(output) << "\n";
    out << "payload_bits " << payload_bits(tokens.size(), ckpt.quantizer.config) << "\n";
    out << "bitrate_bps " << fmt("%.1f", h.bits_per_frame / frame_s) << "\n";
    return 0;
}

int cmd_decode(const std::string & input, const std::string & model_path, const std::string & output,
               std::ostream & out) {
    const auto ckpt = load_checkpoint(model_path);
    const auto bs = read_bitstream_file(input);
    check_config_hash(bs.header, config_hash(ckpt.model.config));
    const auto audio = decode_tokens(ckpt.model, ckpt.quantizer, bs.tokens);
    write_wav(output, audio, bs.header.sample_rate);
    out << "frames " << bs.tokens.size() << "\n";
    out << "samples " << audio.size() << "\n";
    return 0;
}

int cmd_train(const std::string & config, const std::string & output_dir, std::ostream & out) {
    auto cfg = load_experiment(config);
    if (!output_dir.empty()) {
        cfg.output_dir = output_dir;
    }
    const auto r = run_experiment(cfg, &out);
    out << sweep_table(r.rows);
    out << "student " << r.student_checkpoint << "\n";
    return 0;
}

std::map<std::string, std::string> wavs_in(const std::string & dir) {
    if (!fs::is_directory(dir)) {
        throw InputError(dir + " is not a directory");
    }
    std::map<std::string, std::string> m;
    for (const auto & e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".wav") {
            m[e.path().filename().string()] = e.path().string();
        }
    }
    return m;
}

int cmd_eval(const std::string & ref_dir, const std::string & hyp_dir, const std::string & json_path,
             std::ostream & out) {
    const auto refs = wavs_in(ref_dir);
    const auto hyps = wavs_in(hyp_dir);
    std::vector<std::string> unpaired;
    for (const auto & [name, _] : refs) {
        if (!hyps.count(name)) {
            unpaired.push_back(ref_dir + "/" + name);
        }
    }
    for (const auto & [name, _] : hyps) {
        if (!refs.count(name)) {
            unpaired.push_back(hyp_dir + "/" + name);
        }
    }
    if (!unpaired.empty() || refs.empty()) {
        std::string list;
        for (const auto & u : unpaired) {
            list += "\n  " + u;
        }
        throw InputError(refs.empty() ? "no .wav files in " + ref_dir : "unpaired files:" + list);
    }
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    double sl = 0, ss = 0, sm = 0;
    out << "file\tlsd\tsnr\tmel\n";
    for (const auto & [name, path] : refs) {
        const auto r = read_wav(path).samples;
        const auto h = metrics::align_length(read_wav(hyps.at(name)).samples, r.size());
        const double lsd = metrics::lsd(r, h), snr = metrics::snr(r, h), mel = metrics::mel_distance(r, h);
        out << name << "\t" << fmt("%.6f", lsd) << "\t" << fmt("%.4f", snr) << "\t" << fmt("%.6f", mel) << "\n";
        files.push_back({{"file", name}, {"lsd", lsd}, {"snr", snr}, {"mel", mel}});
        sl += lsd;
        ss += snr;
        sm += mel;
    }
    const double n = static_cast<double>(refs.size());
    out << "mean\t" << fmt("%.6f", sl / n) << "\t" << fmt("%.4f", ss / n) << "\t" << fmt("%.6f", sm / n) << "\n";
    if (!json_path.empty()) {
        nlohmann::ordered_json j = {{"files", files}, {"mean", {{"lsd", sl / n}, {"snr", ss / n}, {"mel", sm / n}}}};
        std::ofstream(json_path) << j.dump(2) << "\n";
    }
    return 0;
}

int cmd_report(const std::string & model_path, const std::string & preset_name, std::ostream & out) {
    Checkpoint ckpt;
    if (!model_path.empty()) {
        ckpt = load_checkpoint(model_path);
    } else {
        ckpt = init_checkpoint(preset(preset_name), QuantizerConfig{}, 0);
    }
    const auto & cfg = ckpt.model.config;
    const auto params = count_params(ckpt.model);
    const auto flops = count_flops_per_second(cfg);
    out << "model " << cfg.name << (cfg.causal ? " (causal)" : " (non-causal)") << "\n";
    out << "params " << params.total << "\n";
    out << "flops_per_second " << flops.total << "  (1 MAC = 2 FLOPs, biases not counted, 16 kHz, hop 160)\n";
    out << "taps " << cfg.tap_count() << "\n";
    out << "bits_per_frame " << ckpt.quantizer.config.bits_per_frame() << "\n";
    if (cfg.causal && cfg.cumulative_grn) {
        const auto lat = measure_latency(ckpt.model, ckpt.quantizer);
        out << "frame_latency " << lat.frame_latency_samples << " samples (" << fmt("%.1f", lat.frame_latency_ms)
            << " ms)\n";
        out << "first_output_delay " << lat.first_output_delay_samples << " samples ("
            << fmt("%.1f", lat.first_output_delay_ms) << " ms)\n";
    } else {
        out << "frame_latency n/a (non-causal, offline only)\n";
        out << "first_output_delay n/a (non-causal, offline only)\n";
    }
    for (const auto & m : params.modules) {
        out << "  " << m.name << " params " << m.value << "\n";
    }
    return 0;
}

std::vector<double> read_scores(const std::string & path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot read scores file " + path);
    }
    std::vector<double> v;
    double x;
    while (in >> x) {
        v.push_back(x);
    }
    if (!in.eof()) {
        throw InputError(path + ": expected whitespace-separated numbers");
    }
    return v;
}

int cmd_ttest(const std::string & a, const std::string & b, std::ostream & out) {
    const auto r = metrics::paired_t_test(read_scores(a), read_scores(b));
    out << "n " << r.df + 1 << "\n";
    out << "mean_difference " << fmt("%.9g", r.mean_difference) << "\n";
    out << "t " << fmt("%.9g", r.t) << "\n";
    out << "df " << r.df << "\n";
    out << "p " << fmt("%.9g", r.p) << "\n";
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string> & args, std::ostream & out, std::ostream & err) {
    CLI::App app{"sc2: streamable MDCT speech codec toolkit"};
    app.require_subcommand(1);

    std::string input, model, output, config, out_dir, ref, hyp, json_out, preset_name = "student", a, b;
    std::uint64_t seed = 1;
    std::size_t count = 10;
    double seconds = 2.0;

    auto * enc = app.add_subcommand("encode", "WAV -> SC2 bitstream");
    enc->add_option("--input", input, "16 kHz mono WAV")->required();
    enc->add_option("--model", model, "causal checkpoint")->required();
    enc->add_option("--output", output, "bitstream path")->required();

    auto * dec = app.add_subcommand("decode", "SC2 bitstream -> WAV");
    dec->add_option("--input", input, "bitstream")->required();
    dec->add_option("--model", model, "checkpoint that produced it")->required();
    dec->add_option("--output", output, "WAV path")->required();

    auto * train = app.add_subcommand("train", "run an experiment config");
    train->add_option("--config", config, "experiment JSON")->required();
    train->add_option("--output-dir", out_dir, "overrides output_dir");

    auto * eval = app.add_subcommand("eval", "LSD / SNR / mel distance over paired WAV dirs");
    eval->add_option("--ref", ref, "reference dir")->required();
    eval->add_option("--hyp", hyp, "decoded dir, same file names")->required();
    eval->add_option("--json", json_out, "also write results as JSON");

    auto * report = app.add_subcommand("report", "parameters, FLOPs, taps, latency");
    auto * model_opt = report->add_option("--model", model, "checkpoint");
    report->add_option("--preset", preset_name, "preset name when no checkpoint is given")->excludes(model_opt);

    auto * synth = app.add_subcommand("synth-dataset", "write seeded synthetic speech-like WAVs");
    synth->add_option("--seed", seed);
    synth->add_option("--count", count);
    synth->add_option("--seconds", seconds);
    synth->add_option("--output", output, "directory")->required();

    auto * ttest = app.add_subcommand("t-test", "paired two-sided t-test on two score files");
    ttest->add_option("--a", a, "scores, whitespace separated")->required();
    ttest->add_option("--b", b, "paired scores")->required();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError & e) {
        return app.exit(e, out, err);
    }
    try {
        if (enc->parsed()) {
            return cmd_encode(input, model, output, out);
        }
        if (dec->parsed()) {
            return cmd_decode(input, model, output, out);
        }
        if (train->parsed()) {
            return cmd_train(config, out_dir, out);
        }
        if (eval->parsed()) {
            return cmd_eval(ref, hyp, json_out, out);
        }
        if (report->parsed()) {
            return cmd_report(model, preset_name, out);
        }
        if (synth->parsed()) {
            const auto paths = synth_dataset(output, seed, count, seconds);
            out << "wrote " << paths.size() << " files to " << output << "\n";
            return 0;
        }
        if (ttest->parsed()) {
            return cmd_ttest(a, b, out);
        }
    } catch (const Error & e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace sc2
