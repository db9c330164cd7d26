#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "radiodun/nn/ops.hpp"
#include "radiodun/nn/tensor.hpp"

namespace radiodun::nn {

/// Owns every learnable parameter and persistent buffer of a model, keyed by a
/// stable dotted name. Initialization draws from a single seeded stream, so a
/// fixed registration order makes construction fully reproducible.
class ParamStore {
public:
    explicit ParamStore(uint64_t seed = 0) : rng_(seed) {}

    /// Registers a learnable tensor initialized uniformly in [-bound, bound].
    Tensor add_param(const std::string& name, Shape s, double bound);
    /// Registers a learnable tensor with every element set to `fill`.
    Tensor add_param_const(const std::string& name, Shape s, double fill);
    /// Registers a non-learnable buffer (e.g. running statistics).
    Tensor add_buffer(const std::string& name, Shape s, double fill);

    Tensor get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) || buffers_.count(name); }

    const std::map<std::string, Tensor>& params() const { return params_; }
    const std::map<std::string, Tensor>& buffers() const { return buffers_; }

    /// Total number of learnable scalars.
    size_t param_scalar_count() const;

    /// Drops all accumulated gradients.
    void zero_grad();

    bool training() const { return *training_; }
    void set_training(bool on) { *training_ = on; }
    std::shared_ptr<const bool> training_flag() const { return training_; }

private:
    std::mt19937_64 rng_;
    std::map<std::string, Tensor> params_, buffers_;
    std::shared_ptr<bool> training_ = std::make_shared<bool>(true);
};

/// 2-D convolution with learnable weight and optional bias. `pad < 0` selects
/// same-padding (k/2) for stride-1 use.
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParamStore& ps, const std::string& prefix, int in_ch, int out_ch, int k, int stride = 1,
           int pad = -1, int groups = 1, bool bias = true);

    Tensor forward(const Tensor& x) const;
    const Tensor& weight() const { return w_; }
    const Tensor& bias() const { return b_; }

private:
    Tensor w_, b_;
    int stride_ = 1, pad_ = 0, groups_ = 1;
};

/// BatchNorm over (N,H,W) per channel; batch statistics and running-buffer
/// updates in training mode, frozen running statistics in evaluation mode.
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(ParamStore& ps, const std::string& prefix, int channels);

    Tensor forward(const Tensor& x) const;

private:
    Tensor gamma_, beta_, running_mean_, running_var_;
    std::shared_ptr<const bool> training_;
};

/// LayerNorm across the channel dimension at each spatial position.
class LayerNormChannel {
public:
    LayerNormChannel() = default;
    LayerNormChannel(ParamStore& ps, const std::string& prefix, int channels);

    Tensor forward(const Tensor& x) const;

private:
    Tensor gamma_, beta_;
};

/// Convolution block: convolution (no bias), batch normalization, leaky
/// rectifier. The building unit of every feature-processing stage.
class ConvBlock {
public:
    ConvBlock() = default;
    ConvBlock(ParamStore& ps, const std::string& prefix, int in_ch, int out_ch, int k,
              int stride = 1, int groups = 1);

    Tensor forward(const Tensor& x) const;

private:
    Conv2d conv_;
    BatchNorm2d bn_;
};

}  // namespace radiodun::nn
