#include "radiodun/nn/modules.hpp"

#include <cmath>
#include <stdexcept>

namespace radiodun::nn {

namespace {

void check_new_name(const ParamStore& ps, const std::string& name) {
    if (ps.has(name)) throw std::logic_error("ParamStore: duplicate registration of '" + name + "'");
}

}  // namespace

Tensor ParamStore::add_param(const std::string& name, Shape s, double bound) {
    check_new_name(*this, name);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Array init(static_cast<long>(s.numel()));
    for (long i = 0; i < init.size(); ++i) init(i) = dist(rng_);
    Tensor t = Tensor::from_array(s, std::move(init), true);
    t.raw()->name = name;
    params_.emplace(name, t);
    return t;
}

Tensor ParamStore::add_param_const(const std::string& name, Shape s, double fill) {
    check_new_name(*this, name);
    Tensor t = Tensor::full(s, fill, true);
    t.raw()->name = name;
    params_.emplace(name, t);
    return t;
}

Tensor ParamStore::add_buffer(const std::string& name, Shape s, double fill) {
    check_new_name(*this, name);
    Tensor t = Tensor::full(s, fill, false);
    t.raw()->name = name;
    buffers_.emplace(name, t);
    return t;
}

Tensor ParamStore::get(const std::string& name) const {
    if (auto it = params_.find(name); it != params_.end()) return it->second;
    if (auto it = buffers_.find(name); it != buffers_.end()) return it->second;
    throw std::out_of_range("ParamStore: no tensor named '" + name + "'");
}

size_t ParamStore::param_scalar_count() const {
    size_t total = 0;
    for (const auto& [name, t] : params_) total += t.numel();
    return total;
}

void ParamStore::zero_grad() {
    for (auto& [name, t] : params_) t.raw()->grad.resize(0);
}

Conv2d::Conv2d(ParamStore& ps, const std::string& prefix, int in_ch, int out_ch, int k, int stride,
               int pad, int groups, bool bias)
    : stride_(stride), pad_(pad < 0 ? k / 2 : pad), groups_(groups) {
    if (in_ch < 1 || out_ch < 1 || k < 1) throw std::invalid_argument("Conv2d: bad dimensions");
    if (in_ch % groups != 0 || out_ch % groups != 0)
        throw std::invalid_argument("Conv2d: channels not divisible by groups");
    const int fan_in = (in_ch / groups) * k * k;
    w_ = ps.add_param(prefix + ".w", Shape{out_ch, in_ch / groups, k, k},
                      std::sqrt(6.0 / fan_in));
    if (bias) b_ = ps.add_param(prefix + ".b", Shape{out_ch, 1, 1, 1}, 1.0 / std::sqrt(fan_in));
}

Tensor Conv2d::forward(const Tensor& x) const {
    return conv2d(x, w_, b_, stride_, pad_, groups_);
}

BatchNorm2d::BatchNorm2d(ParamStore& ps, const std::string& prefix, int channels)
    : gamma_(ps.add_param_const(prefix + ".gamma", Shape{1, channels, 1, 1}, 1.0)),
      beta_(ps.add_param_const(prefix + ".beta", Shape{1, channels, 1, 1}, 0.0)),
      running_mean_(ps.add_buffer(prefix + ".running_mean", Shape{1, channels, 1, 1}, 0.0)),
      running_var_(ps.add_buffer(prefix + ".running_var", Shape{1, channels, 1, 1}, 1.0)),
      training_(ps.training_flag()) {}

Tensor BatchNorm2d::forward(const Tensor& x) const {
    return batch_norm(x, gamma_, beta_, running_mean_, running_var_, *training_);
}

LayerNormChannel::LayerNormChannel(ParamStore& ps, const std::string& prefix, int channels)
    : gamma_(ps.add_param_const(prefix + ".gamma", Shape{1, channels, 1, 1}, 1.0)),
      beta_(ps.add_param_const(prefix + ".beta", Shape{1, channels, 1, 1}, 0.0)) {}

Tensor LayerNormChannel::forward(const Tensor& x) const {
    return layer_norm_channel(x, gamma_, beta_);
}

ConvBlock::ConvBlock(ParamStore& ps, const std::string& prefix, int in_ch, int out_ch, int k,
                     int stride, int groups)
    : conv_(ps, prefix + ".conv", in_ch, out_ch, k, stride, -1, groups, /*bias=*/false),
      bn_(ps, prefix + ".bn", out_ch) {}

Tensor ConvBlock::forward(const Tensor& x) const {
    return leaky_relu(bn_.forward(conv_.forward(x)));
}

}  // namespace radiodun::nn
