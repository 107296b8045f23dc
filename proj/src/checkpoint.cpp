#include "sc2/checkpoint.hpp"

#include "sc2/error.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace sc2 {

namespace {

constexpr char magic[8] = {'S', 'C', '2', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t version = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

nlohmann::json quant_json(const QuantizerConfig & c) {
    return {{"latent_dim", c.latent_dim},       {"sq_dims", c.sq_dims},
            {"sq_levels", c.sq_levels},         {"codebook_size", c.codebook_size},
            {"vq_stages", c.vq_stages},         {"ema_decay", c.ema_decay},
            {"refresh_ratio", c.refresh_ratio}, {"refresh_interval", c.refresh_interval},
            {"kmeans_iters", c.kmeans_iters},   {"refresh_noise", c.refresh_noise}};
}

std::vector<std::pair<std::string, Tensor<float>>> tensor_table(const Checkpoint & c) {
    std::vector<std::pair<std::string, Tensor<float>>> t;
    for (const auto & np : c.model.named_parameters()) {
        t.emplace_back("model." + np.name, np.tensor);
    }
    const auto & q = c.quantizer;
    t.emplace_back("quant.down.weight", q.down_w);
    t.emplace_back("quant.down.bias", q.down_b);
    t.emplace_back("quant.up.weight", q.up_w);
    t.emplace_back("quant.up.bias", q.up_b);
    for (std::size_t s = 0; s < q.stages.size(); ++s) {
        t.emplace_back("quant.vq" + std::to_string(s + 1) + ".entries", q.stages[s].entries);
    }
    return t;
}

} // namespace

std::string quantizer_config_json(const QuantizerConfig & cfg) { return quant_json(cfg).dump(); }

QuantizerConfig quantizer_config_from_json(const std::string & text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception & e) {
        throw ConfigError(std::string("quantizer config: ") + e.what());
    }
    QuantizerConfig c;
    const auto ref = quant_json(c);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!ref.contains(it.key())) {
            throw ConfigError("quantizer config: unknown key '" + it.key() + "'");
        }
    }
    try {
        c.latent_dim = j.value("latent_dim", c.latent_dim);
        c.sq_dims = j.value("sq_dims", c.sq_dims);
        c.sq_levels = j.value("sq_levels", c.sq_levels);
        c.codebook_size = j.value("codebook_size", c.codebook_size);
        c.vq_stages = j.value("vq_stages", c.vq_stages);
        c.ema_decay = j.value("ema_decay", c.ema_decay);
        c.refresh_ratio = j.value("refresh_ratio", c.refresh_ratio);
        c.refresh_interval = j.value("refresh_interval", c.refresh_interval);
        c.kmeans_iters = j.value("kmeans_iters", c.kmeans_iters);
        c.refresh_noise = j.value("refresh_noise", c.refresh_noise);
    } catch (const nlohmann::json::exception & e) {
        throw ConfigError(std::string("quantizer config: ") + e.what());
    }
    c.validate();
    return c;
}

Checkpoint init_checkpoint(const CodecConfig & cfg, const QuantizerConfig & qcfg, std::uint64_t seed) {
    if (qcfg.latent_dim != cfg.latent_dim) {
        throw ConfigError("quantizer latent_dim " + std::to_string(qcfg.latent_dim) + " != model latent_dim " +
                          std::to_string(cfg.latent_dim));
    }
    Checkpoint c;
    c.model = build<float>(cfg, seed);
    c.quantizer = build_quantizer<float>(qcfg, seed + 1);
    c.seed = seed;
    return c;
}

std::vector<std::uint8_t> checkpoint_bytes(const Checkpoint & ckpt) {
    const auto table = tensor_table(ckpt);
    nlohmann::json j;
    j["model"] = nlohmann::json::parse(config_json(ckpt.model.config));
    j["quantizer"] = quant_json(ckpt.quantizer.config);
    j["step"] = ckpt.step;
    j["seed"] = ckpt.seed;
    auto & tensors = j["tensors"] = nlohmann::json::array();
    for (const auto & [name, t] : table) {
        tensors.push_back({{"name", name}, {"shape", t.shape()}});
    }
    auto & usage = j["usage"] = nlohmann::json::array();
    for (const auto & s : ckpt.quantizer.stages) {
        usage.push_back(s.usage);
    }
    const std::string meta = j.dump();

    std::vector<std::uint8_t> out(magic, magic + 8);
    auto put = [&](const void * p, std::size_t n) {
        const auto * b = static_cast<const std::uint8_t *>(p);
        out.insert(out.end(), b, b + n);
    };
    put(&version, 4);
    const std::uint64_t len = meta.size();
    put(&len, 8);
    put(meta.data(), meta.size());
    for (const auto & [name, t] : table) {
        put(t.data().data(), t.numel() * sizeof(float));
    }
    return out;
}

Checkpoint checkpoint_from_bytes(const std::vector<std::uint8_t> & bytes) {
    if (bytes.size() < 20 || std::memcmp(bytes.data(), magic, 8) != 0) {
        throw LoadError("not an SC2 checkpoint");
    }
    std::uint32_t ver;
    std::uint64_t len;
    std::memcpy(&ver, bytes.data() + 8, 4);
    std::memcpy(&len, bytes.data() + 12, 8);
    if (ver != version) {
        throw LoadError("unsupported checkpoint version " + std::to_string(ver));
    }
    if (len > bytes.size() - 20) {
        throw LoadError("checkpoint truncated in metadata");
    }
    nlohmann::json j;
    Checkpoint c;
    try {
        j = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(len));
        const auto cfg = config_from_json(j.at("model").dump());
        const auto qcfg = quantizer_config_from_json(j.at("quantizer").dump());
        c = init_checkpoint(cfg, qcfg, 0);
        c.step = j.at("step").get<std::uint64_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
        const auto & usage = j.at("usage");
        if (usage.size() != c.quantizer.stages.size()) {
            throw LoadError("checkpoint usage table has wrong stage count");
        }
        for (std::size_t s = 0; s < usage.size(); ++s) {
            c.quantizer.stages[s].usage = usage[s].get<std::vector<double>>();
            if (c.quantizer.stages[s].usage.size() != qcfg.codebook_size) {
                throw LoadError("checkpoint usage table has wrong size");
            }
        }
    } catch (const nlohmann::json::exception & e) {
        throw LoadError(std::string("checkpoint metadata: ") + e.what());
    } catch (const ConfigError & e) {
        throw LoadError(std::string("checkpoint config: ") + e.what());
    }
    auto table = tensor_table(c);
    const auto & listed = j.at("tensors");
    if (listed.size() != table.size()) {
        throw LoadError("checkpoint tensor table has " + std::to_string(listed.size()) + " entries, expected " +
                        std::to_string(table.size()));
    }
    std::size_t at = 20 + len;
    for (std::size_t i = 0; i < table.size(); ++i) {
        auto & [name, t] = table[i];
        if (listed[i].at("name").get<std::string>() != name || listed[i].at("shape").get<Shape>() != t.shape()) {
            throw LoadError("checkpoint tensor " + std::to_string(i) + " does not match " + name + " " +
                            shape_str(t.shape()));
        }
        const std::size_t n = t.numel() * sizeof(float);
        if (bytes.size() - at < n) {
            throw LoadError("checkpoint truncated in tensor " + name);
        }
        std::memcpy(t.mutable_data().data(), bytes.data() + at, n);
        at += n;
    }
    if (at != bytes.size()) {
        throw LoadError("trailing bytes after checkpoint tensors");
    }
    return c;
}

void save_checkpoint(const std::string & path, const Checkpoint & ckpt) {
    const auto bytes = checkpoint_bytes(ckpt);
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw Error("cannot open " + path + " for writing");
    }
    f.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw Error("checkpoint write failed: " + path);
    }
}

Checkpoint load_checkpoint(const std::string & path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw LoadError("cannot open checkpoint " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return checkpoint_from_bytes(bytes);
}

} // namespace sc2
