#pragma once

#include "sc2/checkpoint.hpp"
#include "sc2/discriminator.hpp"
#include "sc2/losses.hpp"
#include "sc2/optim.hpp"

#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace sc2 {

struct TrainOptions {
    CodecConfig model = preset("toy-student");
    QuantizerConfig quantizer;
    losses::LossWeights weights;
    AdamWOptions optimizer{1e-3, 0.9, 0.999, 1e-8, 0.01};
    std::size_t steps = 3000;
    std::size_t batch_size = 4;
    std::size_t segment_samples = 6400; // multiple of downsample * hop so both ends line up
    std::uint64_t seed = 0;
    std::string mask = "all";
    bool adversarial = false;
    DiscriminatorConfig discriminator;
    std::size_t refresh_window = 8; // steps of stage inputs kept for the k-means refresh
};

// Frozen teacher; only read.
struct TeacherRef {
    const CodecModel<float> * model = nullptr;
    const Quantizer<float> * quantizer = nullptr;
};

struct StepRecord {
    std::size_t step = 0;
    double total = 0, mdct = 0, mel = 0, cb = 0, com = 0;
    double kd = 0;        // raw distillation loss (0 without a teacher)
    double lambda_kd = 0; // weight applied to kd in total
    double adv = 0, fm = 0, disc = 0;
    std::vector<double> perplexity; // per VQ stage, this batch
    std::size_t refreshed = 0;      // codewords re-seeded at this step
};

// One JSON object on a single line; keys documented in the README.
std::string step_record_json(const StepRecord & r, const std::string & stage = "");

struct TrainResult {
    Checkpoint checkpoint;
    losses::ProjectionSet<float> projections; // empty without a teacher
    std::vector<StepRecord> log;
};

// Cuts a segment of `length` samples from a random utterance, zero-padding
// short ones.
std::vector<float> sample_segment(const std::vector<std::vector<float>> & data, std::size_t length,
                                  std::mt19937_64 & rng);

// Trains model + quantizer (+ projections when a teacher is given) with
// AdamW on random segments of `data`. With a teacher the KD term is computed
// (and logged) on every step; a zero lambda keeps it out of the objective.
// Every step record is also written to `log` when non-null.
TrainResult train_codec(const TrainOptions & opt, const std::vector<std::vector<float>> & data,
                        const TeacherRef * teacher = nullptr, std::ostream * log = nullptr,
                        const std::string & stage = "");

struct EvalScores {
    std::vector<double> mel; // per utterance
    std::vector<double> lsd;
    std::vector<double> snr;

    double mean_mel() const;
    double mean_lsd() const;
    double mean_snr() const;
};

// Offline encode/decode of each utterance, decoded audio trimmed to the input.
EvalScores evaluate(const CodecModel<float> & model, const Quantizer<float> & quantizer,
                    const std::vector<std::vector<float>> & data);

} // namespace sc2
