#include "sc2/experiment.hpp"

#include "sc2/error.hpp"
#include "sc2/synth.hpp"
#include "sc2/wav.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace sc2 {

namespace fs = std::filesystem;
using nlohmann::json;

DistillScheme scheme_from_name(const std::string & name) {
    if (name == "none") {
        return DistillScheme::none;
    }
    if (name == "direct") {
        return DistillScheme::direct;
    }
    if (name == "staged_ch") {
        return DistillScheme::staged_ch;
    }
    if (name == "staged_nl") {
        return DistillScheme::staged_nl;
    }
    throw ConfigError("unknown scheme '" + name + "' (expected none, direct, staged_ch, staged_nl)");
}

std::string scheme_name(DistillScheme s) {
    switch (s) {
    case DistillScheme::none:
        return "none";
    case DistillScheme::direct:
        return "direct";
    case DistillScheme::staged_ch:
        return "staged_ch";
    case DistillScheme::staged_nl:
        return "staged_nl";
    }
    return "?";
}

namespace {

json weights_json(const losses::LossWeights & w) {
    return {{"mdct", w.mdct}, {"mel", w.mel}, {"cb", w.cb}, {"com", w.com}, {"kd", w.kd}};
}

json dataset_json(const DatasetSpec & d) {
    return {{"seed", d.seed},           {"train_count", d.train_count}, {"val_count", d.val_count},
            {"seconds", d.seconds},     {"train_dir", d.train_dir},     {"val_dir", d.val_dir}};
}

json to_json(const ExperimentConfig & c) {
    return {{"student", c.student},
            {"teacher", c.teacher},
            {"causal_high", c.causal_high},
            {"noncausal_low", c.noncausal_low},
            {"quantizer", json::parse(quantizer_config_json(c.quantizer))},
            {"weights", weights_json(c.weights)},
            {"scheme", scheme_name(c.scheme)},
            {"mask", c.mask},
            {"lambda_sweep", c.lambda_sweep},
            {"steps", c.steps},
            {"teacher_steps", c.teacher_steps},
            {"seed", c.seed},
            {"batch_size", c.batch_size},
            {"segment_samples", c.segment_samples},
            {"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"adversarial", c.adversarial},
            {"dataset", dataset_json(c.dataset)},
            {"teacher_checkpoint", c.teacher_checkpoint},
            {"output_dir", c.output_dir}};
}

void collect_unknown(const json & doc, const json & ref, const std::string & prefix, std::vector<std::string> & out) {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!ref.contains(it.key())) {
            out.push_back(prefix + it.key());
        } else if (it.value().is_object() && ref[it.key()].is_object() && it.key() != "quantizer") {
            collect_unknown(it.value(), ref[it.key()], prefix + it.key() + ".", out);
        }
    }
}

} // namespace

void ExperimentConfig::validate() const {
    for (const auto & name : {student, teacher, causal_high, noncausal_low}) {
        preset(name); // throws on unknown names
    }
    if (!preset(student).causal) {
        throw ConfigError("student preset '" + student + "' is not causal");
    }
    quantizer.validate();
    weights.validate();
    for (double l : lambda_sweep) {
        if (!(l >= 0.0)) {
            throw ConfigError("lambda_sweep values must be >= 0");
        }
    }
    losses::TapMask::named(mask, preset(student));
    if (batch_size == 0 || !(lr > 0.0) || weight_decay < 0.0) {
        throw ConfigError("batch_size, lr must be positive and weight_decay >= 0");
    }
    if (dataset.train_dir.empty() && (dataset.train_count == 0 || !(dataset.seconds > 0.0))) {
        throw ConfigError("dataset needs train_count > 0 and seconds > 0");
    }
}

ExperimentConfig experiment_from_json(const std::string & text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception & e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    if (!j.is_object()) {
        throw ConfigError("experiment config must be a JSON object");
    }
    ExperimentConfig c;
    std::vector<std::string> unknown;
    collect_unknown(j, to_json(c), "", unknown);
    if (!unknown.empty()) {
        std::string list;
        for (const auto & k : unknown) {
            list += (list.empty() ? "" : ", ") + k;
        }
        throw ConfigError("experiment config: unknown keys: " + list);
    }
    try {
        c.student = j.value("student", c.student);
        c.teacher = j.value("teacher", c.teacher);
        c.causal_high = j.value("causal_high", c.causal_high);
        c.noncausal_low = j.value("noncausal_low", c.noncausal_low);
        if (j.contains("quantizer")) {
            c.quantizer = quantizer_config_from_json(j["quantizer"].dump());
        }
        if (j.contains("weights")) {
            const auto & w = j["weights"];
            c.weights.mdct = w.value("mdct", c.weights.mdct);
            c.weights.mel = w.value("mel", c.weights.mel);
            c.weights.cb = w.value("cb", c.weights.cb);
            c.weights.com = w.value("com", c.weights.com);
            c.weights.kd = w.value("kd", c.weights.kd);
        }
        c.scheme = scheme_from_name(j.value("scheme", scheme_name(c.scheme)));
        c.mask = j.value("mask", c.mask);
        c.lambda_sweep = j.value("lambda_sweep", c.lambda_sweep);
        c.steps = j.value("steps", c.steps);
        c.teacher_steps = j.value("teacher_steps", c.teacher_steps);
        c.seed = j.value("seed", c.seed);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.segment_samples = j.value("segment_samples", c.segment_samples);
        c.lr = j.value("lr", c.lr);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.adversarial = j.value("adversarial", c.adversarial);
        if (j.contains("dataset")) {
            const auto & d = j["dataset"];
            c.dataset.seed = d.value("seed", c.dataset.seed);
            c.dataset.train_count = d.value("train_count", c.dataset.train_count);
            c.dataset.val_count = d.value("val_count", c.dataset.val_count);
            c.dataset.seconds = d.value("seconds", c.dataset.seconds);
            c.dataset.train_dir = d.value("train_dir", c.dataset.train_dir);
            c.dataset.val_dir = d.value("val_dir", c.dataset.val_dir);
        }
        c.teacher_checkpoint = j.value("teacher_checkpoint", c.teacher_checkpoint);
        c.output_dir = j.value("output_dir", c.output_dir);
    } catch (const json::exception & e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_experiment(const std::string & path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read experiment config " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return experiment_from_json(ss.str());
}

std::string experiment_json(const ExperimentConfig & cfg) { return to_json(cfg).dump(); }

namespace {

std::vector<std::vector<float>> read_dir(const std::string & dir) {
    if (!fs::is_directory(dir)) {
        throw InputError("dataset directory " + dir + " does not exist");
    }
    std::vector<std::string> paths;
    for (const auto & e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".wav") {
            paths.push_back(e.path().string());
        }
    }
    std::sort(paths.begin(), paths.end());
    std::vector<std::vector<float>> out;
    for (const auto & p : paths) {
        out.push_back(read_wav(p).samples);
    }
    if (out.empty()) {
        throw InputError("no .wav files in " + dir);
    }
    return out;
}

} // namespace

Dataset load_dataset(const DatasetSpec & spec) {
    Dataset d;
    // same seeds as synth_dataset(seed) / synth_dataset(seed + 1)
    if (!spec.train_dir.empty()) {
        d.train = read_dir(spec.train_dir);
    } else {
        for (std::size_t i = 0; i < spec.train_count; ++i) {
            d.train.push_back(synth_utterance(spec.seed * 100003 + i, spec.seconds));
        }
    }
    if (!spec.val_dir.empty()) {
        d.val = read_dir(spec.val_dir);
    } else {
        for (std::size_t i = 0; i < spec.val_count; ++i) {
            d.val.push_back(synth_utterance((spec.seed + 1) * 100003 + i, spec.seconds));
        }
    }
    return d;
}

TrainOptions stage_options(const ExperimentConfig & cfg, const std::string & variant, double lambda_kd) {
    TrainOptions o;
    o.model = preset(variant);
    o.quantizer = cfg.quantizer;
    o.weights = cfg.weights;
    o.weights.kd = lambda_kd;
    o.optimizer.lr = cfg.lr;
    o.optimizer.weight_decay = cfg.weight_decay;
    o.steps = cfg.steps;
    o.batch_size = cfg.batch_size;
    o.segment_samples = cfg.segment_samples;
    o.seed = cfg.seed;
    o.mask = cfg.mask;
    o.adversarial = cfg.adversarial;
    return o;
}

std::string sweep_table(const std::vector<SweepRow> & rows) {
    std::string s = "lambda_kd\tval_mel\tval_lsd\tval_snr\tfinal_total\tfinal_kd\tcheckpoint\n";
    char buf[256];
    for (const auto & r : rows) {
        std::snprintf(buf, sizeof buf, "%.6g\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t", r.lambda_kd, r.val_mel, r.val_lsd,
                      r.val_snr, r.final_total, r.final_kd);
        s += buf + r.checkpoint + "\n";
    }
    return s;
}

ExperimentResult run_experiment(const ExperimentConfig & cfg, std::ostream * progress) {
    cfg.validate();
    fs::create_directories(cfg.output_dir);
    const auto path = [&](const std::string & name) { return (fs::path(cfg.output_dir) / name).string(); };
    std::ofstream log(path("metrics.jsonl"));
    const auto data = load_dataset(cfg.dataset);
    auto say = [&](const std::string & line) {
        if (progress) {
            *progress << line << std::endl;
        }
    };

    ExperimentResult res;
    auto finish_run = [&](const TrainResult & r, const std::string & ckpt_name, double lambda) {
        save_checkpoint(path(ckpt_name), r.checkpoint);
        SweepRow row;
        row.lambda_kd = lambda;
        const auto scores = evaluate(r.checkpoint.model, r.checkpoint.quantizer, data.val);
        row.val_mel = scores.mean_mel();
        row.val_lsd = scores.mean_lsd();
        row.val_snr = scores.mean_snr();
        if (!r.log.empty()) {
            row.final_total = r.log.back().total;
            row.final_kd = r.log.back().kd;
        }
        row.checkpoint = ckpt_name;
        res.student_scores = scores;
        return row;
    };

    if (cfg.scheme == DistillScheme::none) {
        // without a teacher lambda has nothing to weight; one plain run
        say("training plain student " + cfg.student);
        const auto r = train_codec(stage_options(cfg, cfg.student, 0.0), data.train, nullptr, &log, "student");
        res.stages.push_back("student");
        res.rows.push_back(finish_run(r, "student.ckpt", 0.0));
        res.student_checkpoint = path("student.ckpt");
    } else {
        Checkpoint teacher;
        if (!cfg.teacher_checkpoint.empty()) {
            teacher = load_checkpoint(cfg.teacher_checkpoint);
            if (config_hash(teacher.model.config) != config_hash(preset(cfg.teacher))) {
                throw ConfigMismatchError("teacher checkpoint does not hold preset '" + cfg.teacher + "'");
            }
            say("loaded teacher " + cfg.teacher_checkpoint);
        } else {
            say("training teacher " + cfg.teacher);
            auto o = stage_options(cfg, cfg.teacher, 0.0);
            o.steps = cfg.teacher_steps;
            teacher = train_codec(o, data.train, nullptr, &log, "teacher").checkpoint;
            save_checkpoint(path("teacher.ckpt"), teacher);
            res.stages.push_back("teacher");
        }
        const TeacherRef nh{&teacher.model, &teacher.quantizer};

        Checkpoint middle;
        TeacherRef last = nh;
        if (cfg.scheme == DistillScheme::staged_ch || cfg.scheme == DistillScheme::staged_nl) {
            const auto & variant = cfg.scheme == DistillScheme::staged_ch ? cfg.causal_high : cfg.noncausal_low;
            const std::string tag = cfg.scheme == DistillScheme::staged_ch ? "CH" : "NL";
            say("distilling " + variant + " from " + cfg.teacher);
            middle = train_codec(stage_options(cfg, variant, cfg.weights.kd), data.train, &nh, &log, tag).checkpoint;
            save_checkpoint(path(tag + ".ckpt"), middle);
            res.stages.push_back(tag);
            ++res.distillation_runs;
            last = TeacherRef{&middle.model, &middle.quantizer};
        }

        const auto lambdas = cfg.lambda_sweep.empty() ? std::vector<double>{cfg.weights.kd} : cfg.lambda_sweep;
        for (double lambda : lambdas) {
            char name[64];
            if (cfg.lambda_sweep.empty()) {
                std::snprintf(name, sizeof name, "student.ckpt");
            } else {
                std::snprintf(name, sizeof name, "student_kd%g.ckpt", lambda);
            }
            char stage[64];
            std::snprintf(stage, sizeof stage, "student@%g", lambda);
            say(std::string("distilling ") + cfg.student + " at lambda_kd " + std::to_string(lambda));
            const auto r = train_codec(stage_options(cfg, cfg.student, lambda), data.train, &last, &log, stage);
            res.stages.push_back(stage);
            ++res.distillation_runs;
            res.rows.push_back(finish_run(r, name, lambda));
            res.student_checkpoint = path(name);
        }
    }

    std::ofstream(path("sweep.tsv")) << sweep_table(res.rows);
    json summary = {{"config", json::parse(experiment_json(cfg))},
                    {"stages", res.stages},
                    {"distillation_runs", res.distillation_runs},
                    {"student_checkpoint", res.student_checkpoint},
                    {"val_mel", res.student_scores.mel},
                    {"val_lsd", res.student_scores.lsd},
                    {"val_snr", res.student_scores.snr}};
    std::ofstream(path("summary.json")) << summary.dump(2) << '\n';
    return res;
}

} // namespace sc2
