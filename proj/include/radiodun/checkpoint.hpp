#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "radiodun/model.hpp"
#include "radiodun/nn/optim.hpp"

namespace radiodun {

/// A fully self-describing training snapshot. Parameter, buffer, and optimizer
/// arrays are stored as raw doubles under their ParamStore names, so a reload
/// is bit-exact. The format is a little-endian binary archive.
struct Checkpoint {
    ModelConfig config;
    uint64_t epoch = 0;
    std::string rng_state;  // serialized engine state of the training loop
    std::map<std::string, nn::Array> params;
    std::map<std::string, nn::Array> buffers;
    std::map<std::string, nn::Array> optim;  // empty when saved without an optimizer

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

/// Captures the complete state of a model (and optionally its optimizer).
Checkpoint snapshot(const RadioDUN& model, const nn::AdamW* opt, uint64_t epoch,
                    const std::string& rng_state);

/// Writes a checkpoint back into a live model (and optionally an optimizer).
/// The model must have been constructed with the same configuration; any name
/// or size mismatch throws.
void restore(RadioDUN& model, nn::AdamW* opt, const Checkpoint& ck);

/// Convenience: build a model from the checkpoint's own configuration.
RadioDUN model_from_checkpoint(const Checkpoint& ck);

}  // namespace radiodun
