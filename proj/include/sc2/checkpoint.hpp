#pragma once

#include "sc2/codec_model.hpp"
#include "sc2/quantizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sc2 {

struct Checkpoint {
    CodecModel<float> model;
    Quantizer<float> quantizer;
    std::uint64_t step = 0;
    std::uint64_t seed = 0;
};

std::string quantizer_config_json(const QuantizerConfig & cfg);
QuantizerConfig quantizer_config_from_json(const std::string & text);

// Fresh, seeded model and quantizer (what a 0-step training run writes).
Checkpoint init_checkpoint(const CodecConfig & cfg, const QuantizerConfig & qcfg, std::uint64_t seed);

// "SC2CKPT\0", u32 version, u64 JSON length, JSON (configs, step, seed,
// tensor table), then raw little-endian float32 tensor data in table order.
std::vector<std::uint8_t> checkpoint_bytes(const Checkpoint & ckpt);
Checkpoint checkpoint_from_bytes(const std::vector<std::uint8_t> & bytes);

void save_checkpoint(const std::string & path, const Checkpoint & ckpt);
// Missing file, bad magic, truncation or table mismatch -> LoadError
Checkpoint load_checkpoint(const std::string & path);

} // namespace sc2
