#include "sc2/train.hpp"

#include "sc2/codec.hpp"
#include "sc2/error.hpp"
#include "sc2/metrics.hpp"

#include "json.hpp"

#include <numeric>
#include <ostream>

namespace sc2 {

std::string step_record_json(const StepRecord & r, const std::string & stage) {
    nlohmann::ordered_json j;
    if (!stage.empty()) {
        j["stage"] = stage;
    }
    j["step"] = r.step;
    j["total"] = r.total;
    j["mdct"] = r.mdct;
    j["mel"] = r.mel;
    j["cb"] = r.cb;
    j["com"] = r.com;
    j["kd"] = r.kd;
    j["lambda_kd"] = r.lambda_kd;
    j["kd_weighted"] = r.lambda_kd * r.kd;
    j["adv"] = r.adv;
    j["fm"] = r.fm;
    j["disc"] = r.disc;
    j["perplexity"] = r.perplexity;
    j["refreshed"] = r.refreshed;
    return j.dump();
}

std::vector<float> sample_segment(const std::vector<std::vector<float>> & data, std::size_t length,
                                  std::mt19937_64 & rng) {
    if (data.empty()) {
        throw ContractError("training set is empty");
    }
    const auto & u = data[std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng)];
    std::vector<float> seg(length, 0.f);
    if (u.size() <= length) {
        std::copy(u.begin(), u.end(), seg.begin());
    } else {
        const std::size_t start = std::uniform_int_distribution<std::size_t>(0, u.size() - length)(rng);
        std::copy_n(u.begin() + static_cast<std::ptrdiff_t>(start), length, seg.begin());
    }
    return seg;
}

namespace {

void zero_grads(const std::vector<Tensor<float>> & params) {
    for (auto p : params) { // handles share the node
        auto g = p.mutable_grad();
        std::fill(g.begin(), g.end(), 0.f);
    }
}

template <typename V>
void append(std::vector<V> & into, const std::vector<V> & more) {
    into.insert(into.end(), more.begin(), more.end());
}

} // namespace

TrainResult train_codec(const TrainOptions & opt, const std::vector<std::vector<float>> & data,
                        const TeacherRef * teacher, std::ostream * log, const std::string & stage) {
    opt.model.validate();
    opt.quantizer.validate();
    opt.weights.validate();
    const std::size_t unit = opt.model.downsample_factor * opt.model.mdct_bins;
    if (opt.segment_samples == 0 || opt.segment_samples % unit != 0) {
        throw ConfigError("segment_samples must be a positive multiple of " + std::to_string(unit));
    }
    if (opt.batch_size == 0) {
        throw ConfigError("batch_size must be positive");
    }
    if (opt.adversarial && opt.segment_samples < opt.discriminator.fft_sizes.back()) {
        throw ConfigError("segment_samples is shorter than the largest discriminator window");
    }
    if (teacher && (!teacher->model || !teacher->quantizer)) {
        throw ContractError("teacher reference is incomplete");
    }

    TrainResult res;
    res.checkpoint = init_checkpoint(opt.model, opt.quantizer, opt.seed);
    auto & model = res.checkpoint.model;
    auto & quant = res.checkpoint.quantizer;
    const auto mask = losses::TapMask::named(opt.mask, opt.model);
    if (teacher) {
        res.projections = losses::build_projections<float>(opt.model, teacher->model->config, opt.seed);
    }

    std::vector<Tensor<float>> params = model.parameters();
    append(params, quant.parameters());
    append(params, res.projections.weights);
    AdamW<float> adam(params, opt.optimizer);

    Discriminator<float> disc;
    std::unique_ptr<AdamW<float>> disc_adam;
    if (opt.adversarial) {
        disc = build_discriminator<float>(opt.discriminator, opt.seed + 2);
        disc_adam = std::make_unique<AdamW<float>>(disc.parameters(), opt.optimizer);
    }

    const auto mcfg = dsp::make_mdct_config(opt.model.mdct_bins, opt.model.sample_rate);
    std::mt19937_64 rng(opt.seed ^ 0x7261696eULL);
    const std::size_t stages = opt.quantizer.vq_stages;
    std::vector<std::vector<std::vector<float>>> window; // recent steps, per stage rows
    const double lambda = opt.weights.kd;

    for (std::size_t step = 1; step <= opt.steps; ++step) {
        std::vector<Tensor<float>> mdct_terms, mel_terms, cb_terms, com_terms, adv_terms, fm_terms, disc_terms;
        std::vector<TapSet<float>> student_taps, teacher_taps;
        std::vector<std::vector<std::size_t>> indices(stages);
        std::vector<std::vector<float>> step_inputs(stages);
        for (std::size_t b = 0; b < opt.batch_size; ++b) {
            const auto seg = sample_segment(data, opt.segment_samples, rng);
            const auto spec = dsp::spectrum_to_tensor(dsp::mdct_forward<float>(seg, mcfg));
            const Tensor<float> ref(Shape{seg.size()}, std::vector<float>(seg));

            TapSet<float> taps;
            const auto latent = encode(model, spec, &taps);
            auto q = rsvq_forward(quant, latent, QuantMode::training);
            const auto spec_hat = decode(model, q.quantized, &taps);
            const auto audio_hat = dsp::imdct_op(spec_hat, mcfg);

            mdct_terms.push_back(losses::mdct_loss(spec_hat, spec));
            mel_terms.push_back(losses::mel_loss(audio_hat, ref));
            cb_terms.push_back(q.codebook_loss);
            com_terms.push_back(q.commitment_loss);
            for (std::size_t s = 0; s < stages; ++s) {
                append(indices[s], q.indices[s]);
                append(step_inputs[s], q.stage_inputs[s]);
            }
            if (teacher) {
                NoGradGuard ng;
                TapSet<float> tt;
                const auto tl = encode(*teacher->model, spec, &tt);
                auto tq = *teacher->quantizer; // inference mode: usage is not touched, but keep the teacher const
                const auto tr = rsvq_forward(tq, tl, QuantMode::inference);
                decode(*teacher->model, tr.quantized, &tt);
                teacher_taps.push_back(std::move(tt));
            }
            student_taps.push_back(std::move(taps));

            if (opt.adversarial) {
                // discriminator step on detached output
                const auto d_ref = discriminator_forward(disc, ref);
                const auto d_hat = discriminator_forward(disc, audio_hat.detach());
                disc_terms.push_back(adversarial_losses(d_ref, d_hat).discriminator);
                const auto g_hat = discriminator_forward(disc, audio_hat);
                const auto g = adversarial_losses(d_ref, g_hat);
                adv_terms.push_back(g.generator);
                fm_terms.push_back(g.feature_matching);
            }
        }
        const float inv = 1.f / static_cast<float>(opt.batch_size);
        auto batch_mean = [&](const std::vector<Tensor<float>> & t) {
            return t.empty() ? Tensor<float>() : ops::scale(ops::add_n(t), inv);
        };

        StepRecord rec;
        rec.step = step;
        rec.lambda_kd = lambda;
        if (opt.adversarial) {
            // the D update comes first and only touches discriminator weights
            const auto ld = batch_mean(disc_terms);
            zero_grads(disc.parameters());
            backward(ld);
            disc_adam->step();
            rec.disc = ld.item();
        }

        losses::LossComponents<float> c;
        c.mdct = batch_mean(mdct_terms);
        c.mel = batch_mean(mel_terms);
        c.cb = batch_mean(cb_terms);
        c.com = batch_mean(com_terms);
        if (opt.adversarial) {
            c.adv = batch_mean(adv_terms);
            c.fm = batch_mean(fm_terms);
        }
        if (teacher) {
            c.kd = losses::kd_loss(student_taps, teacher_taps, res.projections, mask);
        }
        const auto total = losses::total_loss(c, opt.weights);
        zero_grads(params);
        if (opt.adversarial) {
            zero_grads(disc.parameters()); // generator pass must not leak into D
        }
        backward(total);
        adam.step();

        rec.total = total.item();
        rec.mdct = c.mdct.item();
        rec.mel = c.mel.item();
        rec.cb = c.cb.item();
        rec.com = c.com.item();
        rec.kd = c.kd.defined() ? c.kd.item() : 0.0;
        if (opt.adversarial) {
            rec.adv = c.adv.item();
            rec.fm = c.fm.item();
        }
        for (std::size_t s = 0; s < stages; ++s) {
            rec.perplexity.push_back(perplexity(indices[s], opt.quantizer.codebook_size));
        }

        window.push_back(std::move(step_inputs));
        if (window.size() > opt.refresh_window) {
            window.erase(window.begin());
        }
        if (opt.quantizer.refresh_interval > 0 && step % opt.quantizer.refresh_interval == 0) {
            for (std::size_t s = 0; s < stages; ++s) {
                std::vector<float> rows;
                for (const auto & w : window) {
                    append(rows, w[s]);
                }
                rec.refreshed += codebook_refresh(quant.stages[s], rows, rows.size() / opt.quantizer.latent_dim,
                                                  opt.quantizer, opt.seed * 1000003 + step * 31 + s);
            }
        }
        if (log) {
            *log << step_record_json(rec, stage) << '\n';
        }
        res.log.push_back(std::move(rec));
    }
    res.checkpoint.step = opt.steps;
    return res;
}

namespace {

double mean_of(const std::vector<double> & v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

double EvalScores::mean_mel() const { return mean_of(mel); }
double EvalScores::mean_lsd() const { return mean_of(lsd); }
double EvalScores::mean_snr() const { return mean_of(snr); }

EvalScores evaluate(const CodecModel<float> & model, const Quantizer<float> & quantizer,
                    const std::vector<std::vector<float>> & data) {
    EvalScores s;
    for (const auto & u : data) {
        const auto hyp = metrics::align_length(decode_tokens(model, quantizer, encode_audio<float>(model, quantizer, u)),
                                               u.size());
        s.mel.push_back(metrics::mel_distance(u, hyp));
        s.lsd.push_back(metrics::lsd(u, hyp));
        s.snr.push_back(metrics::snr(u, hyp));
    }
    return s;
}

} // namespace sc2
