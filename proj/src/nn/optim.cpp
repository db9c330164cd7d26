#include "radiodun/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace radiodun::nn {

AdamW::AdamW(ParamStore& store, AdamWConfig cfg) : store_(&store), cfg_(cfg) {
    if (cfg_.lr < 0 || cfg_.weight_decay < 0 || cfg_.eps <= 0 || cfg_.beta1 < 0 ||
        cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1)
        throw std::invalid_argument("AdamW: invalid hyperparameters");
    for (const auto& [name, t] : store.params()) {
        m_[name] = Array::Zero(static_cast<long>(t.numel()));
        v_[name] = Array::Zero(static_cast<long>(t.numel()));
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& [name, t] : store_->params()) {
        const Array& g = t.raw()->grad;
        if (g.size() == 0) continue;
        Array& m = m_.at(name);
        Array& v = v_.at(name);
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.square();
        Tensor handle = t;  // shared node; cheap copy for a mutable view
        Array& p = handle.mutable_value();
        p -= cfg_.lr * cfg_.weight_decay * p;  // decoupled decay
        p -= cfg_.lr * (m / bc1) / ((v / bc2).sqrt() + cfg_.eps);
    }
    store_->zero_grad();
}

std::map<std::string, Array> AdamW::export_state() const {
    std::map<std::string, Array> out;
    for (const auto& [name, a] : m_) out["m." + name] = a;
    for (const auto& [name, a] : v_) out["v." + name] = a;
    out["t"] = Array::Constant(1, static_cast<double>(t_));
    return out;
}

void AdamW::import_state(const std::map<std::string, Array>& state) {
    for (auto& [name, a] : m_) {
        auto it = state.find("m." + name);
        if (it == state.end() || it->second.size() != a.size())
            throw std::invalid_argument("AdamW: missing or mismatched state for 'm." + name + "'");
        a = it->second;
    }
    for (auto& [name, a] : v_) {
        auto it = state.find("v." + name);
        if (it == state.end() || it->second.size() != a.size())
            throw std::invalid_argument("AdamW: missing or mismatched state for 'v." + name + "'");
        a = it->second;
    }
    auto it = state.find("t");
    if (it == state.end() || it->second.size() != 1)
        throw std::invalid_argument("AdamW: missing step counter in state");
    t_ = static_cast<int64_t>(it->second(0));
}

double cosine_annealed_lr(double lr_max, double lr_min, int64_t step, int64_t total_steps) {
    if (total_steps <= 0) throw std::invalid_argument("cosine_annealed_lr: total_steps must be > 0");
    if (step >= total_steps) return lr_min;
    if (step < 0) step = 0;
    const double phase = M_PI * static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

}  // namespace radiodun::nn
