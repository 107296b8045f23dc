#pragma once

#include "sc2/train.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace sc2 {

// none: plain student. direct: NH -> CL. staged_ch: NH -> CH -> CL.
// staged_nl: NH -> NL -> CL. Each arrow is one distillation run.
enum class DistillScheme { none, direct, staged_ch, staged_nl };

DistillScheme scheme_from_name(const std::string & name);
std::string scheme_name(DistillScheme s);

struct DatasetSpec {
    std::uint64_t seed = 1;
    std::size_t train_count = 32;
    std::size_t val_count = 8;
    double seconds = 2.0;
    // when set, WAVs are read from these directories instead of synthesised
    std::string train_dir;
    std::string val_dir;
};

struct ExperimentConfig {
    // preset names for the final student, the non-causal high-complexity
    // teacher and the two intermediate variants of the staged schemes
    std::string student = "toy-student";
    std::string teacher = "toy-teacher";
    std::string causal_high = "toy-CH";
    std::string noncausal_low = "toy-NL";
    QuantizerConfig quantizer;
    losses::LossWeights weights;
    DistillScheme scheme = DistillScheme::direct;
    std::string mask = "all";
    std::vector<double> lambda_sweep; // empty: one run at weights.kd
    std::size_t steps = 3000;
    std::size_t teacher_steps = 3000;
    std::uint64_t seed = 0;
    std::size_t batch_size = 4;
    std::size_t segment_samples = 6400;
    double lr = 1e-3;
    double weight_decay = 0.01;
    bool adversarial = false;
    DatasetSpec dataset;
    std::string teacher_checkpoint; // reuse instead of training the teacher
    std::string output_dir = "run";

    void validate() const;
};

// Unknown keys anywhere in the document -> ConfigError naming all of them.
ExperimentConfig experiment_from_json(const std::string & text);
ExperimentConfig load_experiment(const std::string & path);
// Canonical form (sorted keys, every field present).
std::string experiment_json(const ExperimentConfig & cfg);

struct Dataset {
    std::vector<std::vector<float>> train;
    std::vector<std::vector<float>> val;
};

Dataset load_dataset(const DatasetSpec & spec);

// Options for one training run of `variant` under the experiment settings.
TrainOptions stage_options(const ExperimentConfig & cfg, const std::string & variant, double lambda_kd);

struct SweepRow {
    double lambda_kd = 0;
    double val_mel = 0, val_lsd = 0, val_snr = 0;
    double final_total = 0, final_kd = 0;
    std::string checkpoint;
};

struct ExperimentResult {
    std::vector<std::string> stages; // "teacher", "CH", "student", ...
    std::size_t distillation_runs = 0;
    std::string student_checkpoint;
    std::vector<SweepRow> rows;
    EvalScores student_scores; // last run
};

// Runs the configured pipeline, writing checkpoints, metrics.jsonl
// (one line per step, tagged with the stage), sweep.tsv and summary.json
// under cfg.output_dir. Progress lines go to `progress` when non-null.
ExperimentResult run_experiment(const ExperimentConfig & cfg, std::ostream * progress = nullptr);

std::string sweep_table(const std::vector<SweepRow> & rows);

} // namespace sc2
