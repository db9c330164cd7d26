#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "radiodun/nn/modules.hpp"

namespace radiodun::nn {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

/// AdamW with decoupled weight decay over every parameter of a ParamStore.
/// Parameters that received no gradient in the current step are left untouched.
class AdamW {
public:
    explicit AdamW(ParamStore& store, AdamWConfig cfg = {});

    /// Applies one update from the accumulated gradients, then clears them.
    void step();

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    int64_t steps_taken() const { return t_; }

    /// Moment estimates and step counter under stable keys ("m.<param>",
    /// "v.<param>", "t"), for checkpointing.
    std::map<std::string, Array> export_state() const;
    void import_state(const std::map<std::string, Array>& state);

private:
    ParamStore* store_;
    AdamWConfig cfg_;
    int64_t t_ = 0;
    std::map<std::string, Array> m_, v_;
};

/// Cosine annealing from lr_max down to lr_min across total_steps, evaluated at
/// a zero-based step index; past the horizon it stays at lr_min.
double cosine_annealed_lr(double lr_max, double lr_min, int64_t step, int64_t total_steps);

}  // namespace radiodun::nn
