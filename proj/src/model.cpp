#include "radiodun/model.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

namespace radiodun {

using nn::Array;
using nn::Shape;
using nn::Tensor;

void ModelConfig::validate() const {
    if (K < 1) throw std::invalid_argument("ModelConfig: K must be >= 1");
    if (C < 1) throw std::invalid_argument("ModelConfig: C must be >= 1");
    if (m < 1) throw std::invalid_argument("ModelConfig: m must be >= 1 (shadow head needs an obstacle factor)");
    if (unet_depth < 1) throw std::invalid_argument("ModelConfig: unet_depth must be >= 1");
    if (base_channels < 1) throw std::invalid_argument("ModelConfig: base_channels must be >= 1");
    if (H < 2 || W < 2) throw std::invalid_argument("ModelConfig: H and W must be >= 2");
    const int div = 1 << (unet_depth - 1);
    if (H % div != 0 || W % div != 0)
        throw std::invalid_argument("ModelConfig: H and W must be divisible by 2^(unet_depth-1)");
}

std::string ModelConfig::to_json() const {
    nlohmann::json j;
    j["K"] = K;
    j["C"] = C;
    j["m"] = m;
    j["unet_depth"] = unet_depth;
    j["base_channels"] = base_channels;
    j["H"] = H;
    j["W"] = W;
    j["drm_counterpart"] = drm_counterpart;
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig cfg;
    cfg.K = j.at("K").get<int>();
    cfg.C = j.at("C").get<int>();
    cfg.m = j.at("m").get<int>();
    cfg.unet_depth = j.at("unet_depth").get<int>();
    cfg.base_channels = j.at("base_channels").get<int>();
    cfg.H = j.at("H").get<int>();
    cfg.W = j.at("W").get<int>();
    cfg.drm_counterpart = j.value("drm_counterpart", false);
    cfg.validate();
    return cfg;
}

// ---- tensor/grid bridging ----

Tensor batch_from_grids(const std::vector<GridMap>& maps) {
    if (maps.empty()) throw std::invalid_argument("batch_from_grids: empty batch");
    const int h = maps[0].h, w = maps[0].w;
    const long per = static_cast<long>(h) * w;
    Array out(static_cast<long>(maps.size()) * per);
    for (size_t n = 0; n < maps.size(); ++n) {
        if (maps[n].h != h || maps[n].w != w)
            throw std::invalid_argument("batch_from_grids: mismatched map shapes");
        for (long i = 0; i < per; ++i) out(static_cast<long>(n) * per + i) = maps[n][static_cast<size_t>(i)];
    }
    return Tensor::from_array({static_cast<int>(maps.size()), 1, h, w}, std::move(out));
}

GridMap grid_from_batch(const Tensor& t, int n) {
    const Shape s = t.shape();
    if (s.c != 1) throw std::invalid_argument("grid_from_batch: expected a single-channel tensor");
    if (n < 0 || n >= s.n) throw std::out_of_range("grid_from_batch: batch index out of range");
    GridMap out(s.h, s.w);
    const long per = static_cast<long>(s.h) * s.w;
    for (long i = 0; i < per; ++i) out[static_cast<size_t>(i)] = t.value()(static_cast<long>(n) * per + i);
    return out;
}

Tensor scatter_tensor(const std::vector<double>& y, const SamplingPlan& plan) {
    if (static_cast<int>(y.size()) != plan.count())
        throw std::invalid_argument("scatter_tensor: observation length does not match plan");
    Array out = Array::Zero(static_cast<long>(plan.h) * plan.w);
    for (size_t k = 0; k < y.size(); ++k) out(plan.indices[k]) = y[k];
    return Tensor::from_array({1, 1, plan.h, plan.w}, std::move(out));
}

Tensor mask_tensor(const SamplingPlan& plan) {
    Array out = Array::Zero(static_cast<long>(plan.h) * plan.w);
    for (int idx : plan.indices) out(idx) = 1.0;
    return Tensor::from_array({1, 1, plan.h, plan.w}, std::move(out));
}

// ---- differentiable losses ----

Tensor mse_t(const Tensor& x_gt, const Tensor& x_hat) {
    Tensor d = nn::sub(x_gt, x_hat);
    return nn::mean_all(nn::mul(d, d));
}

Tensor shadowing_loss_t(const Tensor& x_sigma, const Tensor& x_gt, const Tensor& x_hat) {
    // per-sample spatial mean, broadcast back over the map
    Tensor ones = Tensor::full(x_sigma.shape(), 1.0);
    Tensor mean_map = nn::mul_channel(ones, nn::global_avg_pool(x_sigma));
    Tensor centered = nn::sub(x_sigma, mean_map);
    Tensor t1 = nn::mean_all(nn::mul(centered, centered));
    Tensor r = nn::add(nn::sub(x_gt, x_hat), centered);
    Tensor t2 = nn::mean_all(nn::mul(r, r));
    return nn::add(t1, t2);
}

Tensor total_loss_t(const Tensor& x_gt, const Tensor& x_hat, const Tensor& x_sigma, double mu) {
    if (mu < 0.0) throw std::invalid_argument("total_loss_t: mu must be >= 0");
    return nn::add(shadowing_loss_t(x_sigma, x_gt, x_hat), nn::scale(mse_t(x_gt, x_hat), mu));
}

// ---- FactorLift ----

FactorLift::FactorLift(nn::ParamStore& ps, const std::string& prefix, int in_ch, int channels)
    : b1_(ps, prefix + ".b1", in_ch, channels, 3), b2_(ps, prefix + ".b2", channels, channels, 3) {}

Tensor FactorLift::forward(const Tensor& x) const {
    return b2_.forward(b1_.forward(x));
}

// ---- InitModule ----

InitModule::InitModule(nn::ParamStore& ps, const std::string& prefix, int m, int channels)
    : m_(m) {
    // Every factor net sees the same channel budget: y, mask, i produced factors,
    // and the m+1-i untouched priors sum to m+3 inputs for each i.
    for (int i = 0; i <= m; ++i) {
        const std::string base = prefix + ".f" + std::to_string(i);
        nets_.push_back(FactorNet{nn::ConvBlock(ps, base + ".b1", m + 3, channels, 3),
                                  nn::ConvBlock(ps, base + ".b2", channels, 1, 3)});
    }
    x0_ = nn::ConvBlock(ps, prefix + ".x0", m + 1, 1, 1);
    v0_ = FactorLift(ps, prefix + ".v0", m + 1, channels);
}

std::tuple<std::vector<Tensor>, Tensor, Tensor> InitModule::forward(
    const Tensor& y_scat, const Tensor& mask, const std::vector<Tensor>& priors) const {
    if (static_cast<int>(priors.size()) != m_ + 1)
        throw std::invalid_argument("InitModule: expected m+1 prior channels");

    std::vector<Tensor> factors;
    for (int i = 0; i <= m_; ++i) {
        std::vector<Tensor> inputs = {y_scat, mask};
        for (int j = 0; j < i; ++j) inputs.push_back(factors[static_cast<size_t>(j)]);
        for (int p = i; p <= m_; ++p) inputs.push_back(priors[static_cast<size_t>(p)]);
        const FactorNet& net = nets_[static_cast<size_t>(i)];
        factors.push_back(net.b2.forward(net.b1.forward(nn::concat_channels(inputs))));
    }
    Tensor stacked = nn::concat_channels(factors);
    Tensor x0 = x0_.forward(stacked);
    Tensor v0 = v0_.forward(stacked);
    return {factors, x0, v0};
}

// ---- Gdm ----

Gdm::Gdm(nn::ParamStore& ps, const std::string& prefix, int m, double beta_init, double eps_init) {
    if (eps_init < 0.0) throw std::invalid_argument("Gdm: eps_init must be >= 0");
    for (int i = 0; i <= m; ++i)
        beta_.push_back(
            ps.add_param_const(prefix + ".beta" + std::to_string(i), {1, 1, 1, 1}, beta_init));
    const double raw = eps_init > 0.0 ? std::log(std::expm1(eps_init)) : -800.0;
    eps_raw_ = ps.add_param_const(prefix + ".eps_raw", {1, 1, 1, 1}, raw);
}

std::vector<Tensor> Gdm::forward(const std::vector<Tensor>& factors, const Tensor& mask,
                                 const Tensor& y_scat) const {
    if (factors.size() != beta_.size())
        throw std::invalid_argument("Gdm: factor count does not match step-size count");
    Tensor eps = nn::softplus(eps_raw_);

    std::vector<Tensor> work = factors;
    for (size_t i = 0; i < work.size(); ++i) {
        // Fresh left-to-right composition so j < i see this sweep's updates and the
        // float rounding matches the classical solver exactly.
        Tensor sum = work[0];
        for (size_t j = 1; j < work.size(); ++j) sum = nn::add(sum, work[j]);
        Tensor grad = nn::sub(nn::mul(sum, mask), y_scat);
        Tensor z = nn::sub(work[i], nn::mul_scalar_t(grad, beta_[i]));
        work[i] = nn::soft_threshold_t(z, eps);
    }
    return work;
}

void Gdm::set_scalars(const std::vector<double>& beta, double eps) {
    if (beta.size() != beta_.size())
        throw std::invalid_argument("Gdm: wrong number of step sizes");
    if (eps < 0.0) throw std::invalid_argument("Gdm: eps must be >= 0");
    for (size_t i = 0; i < beta.size(); ++i) beta_[i].mutable_value()(0) = beta[i];
    // softplus(-800) underflows to zero, making the threshold an exact identity
    eps_raw_.mutable_value()(0) = eps > 0.0 ? std::log(std::expm1(eps)) : -800.0;
}

std::vector<double> Gdm::betas() const {
    std::vector<double> out;
    for (const Tensor& b : beta_) out.push_back(b.value()(0));
    return out;
}

double Gdm::epsilon() const {
    const double x = eps_raw_.value()(0);
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

// ---- Cam ----

Cam::Cam(nn::ParamStore& ps, const std::string& prefix, int channels)
    : ln_(ps, prefix + ".ln", channels),
      q_pw_(ps, prefix + ".q_pw", channels, channels, 1),
      q_dw_(ps, prefix + ".q_dw", channels, channels, 3, 1, channels),
      k_pw_(ps, prefix + ".k_pw", channels, channels, 1),
      k_dw_(ps, prefix + ".k_dw", channels, channels, 3, 1, channels),
      v_pw_(ps, prefix + ".v_pw", channels, channels, 1),
      v_dw_(ps, prefix + ".v_dw", channels, channels, 3, 1, channels) {}

Tensor Cam::forward(const Tensor& f) const {
    const Shape s = f.shape();
    const Shape flat{s.n, 1, s.c, s.h * s.w};
    Tensor fn = ln_.forward(f);
    Tensor q = nn::reshape(q_dw_.forward(q_pw_.forward(fn)), flat);
    Tensor k = nn::reshape(k_dw_.forward(k_pw_.forward(fn)), flat);
    Tensor v = nn::reshape(v_dw_.forward(v_pw_.forward(fn)), flat);
    Tensor a = nn::softmax_lastdim(nn::bmm(q, nn::transpose_last2(k)));
    return nn::reshape(nn::bmm(a, v), s);
}

Tensor Cam::attention(const Tensor& f) const {
    const Shape s = f.shape();
    const Shape flat{s.n, 1, s.c, s.h * s.w};
    Tensor fn = ln_.forward(f);
    Tensor q = nn::reshape(q_dw_.forward(q_pw_.forward(fn)), flat);
    Tensor k = nn::reshape(k_dw_.forward(k_pw_.forward(fn)), flat);
    return nn::softmax_lastdim(nn::bmm(q, nn::transpose_last2(k)));
}

// ---- StageBlock ----

StageBlock::StageBlock(nn::ParamStore& ps, const std::string& prefix, int channels)
    : conv_path_(ps, prefix + ".conv", channels, channels, 3),
      cam_(ps, prefix + ".cam", channels),
      ffn1_(ps, prefix + ".ffn1", channels, channels, 3),
      ffn2_(ps, prefix + ".ffn2", channels, channels, 3),
      ffn3_(ps, prefix + ".ffn3", channels, channels, 3) {}

Tensor StageBlock::forward(const Tensor& f) const {
    Tensor mid = nn::add(f, nn::add(conv_path_.forward(f), cam_.forward(f)));
    return nn::add(mid, ffn3_.forward(ffn2_.forward(ffn1_.forward(mid))));
}

// ---- Drm ----

Drm::Drm(nn::ParamStore& ps, const std::string& prefix, int m, int channels, bool counterpart)
    : counterpart_(counterpart) {
    if (counterpart_) {
        counter_ = nn::ConvBlock(ps, prefix + ".counter", m + 1, 1, 1);
        return;
    }
    lift_ = FactorLift(ps, prefix + ".lift", m + 1, channels);
    ch_linear_ = nn::Conv2d(ps, prefix + ".ch_linear", channels, channels, 1);
    sp_conv_ = nn::ConvBlock(ps, prefix + ".sp", 2, 1, 7);
    refine_ = nn::ConvBlock(ps, prefix + ".refine", channels, channels, 3);
    dconv_ = nn::ConvBlock(ps, prefix + ".dconv", channels, channels, 3, 1, channels);
    fuse_ = nn::ConvBlock(ps, prefix + ".fuse", channels, 1, 3);
}

std::pair<Tensor, Tensor> Drm::forward(const std::vector<Tensor>& factors,
                                       const Tensor& v_prev) const {
    if (factors.empty()) throw std::invalid_argument("Drm: empty factor stack");
    Tensor stacked = nn::concat_channels(factors);
    if (counterpart_) return {counter_.forward(stacked), v_prev};

    Tensor v_k = lift_.forward(stacked);
    auto [c_ch, c_sp] = attention(v_prev);
    Tensor v_ch = nn::mul_channel(v_prev, c_ch);
    Tensor v_ref = refine_.forward(nn::mul_spatial(v_ch, c_sp));
    Tensor d = dconv_.forward(v_ref);
    Tensor x_rough = fuse_.forward(nn::add(nn::mul(v_k, nn::sigmoid(d)), d));
    return {x_rough, v_k};
}

std::pair<Tensor, Tensor> Drm::attention(const Tensor& v_prev) const {
    if (counterpart_) throw std::logic_error("Drm: the counterpart has no attention maps");
    Tensor pooled = nn::add(nn::global_avg_pool(v_prev), nn::global_max_pool(v_prev));
    Tensor c_ch = nn::sigmoid(ch_linear_.forward(pooled));
    Tensor v_ch = nn::mul_channel(v_prev, c_ch);
    Tensor c_sp = nn::sigmoid(
        sp_conv_.forward(nn::concat_channels({nn::channel_mean(v_ch), nn::channel_max(v_ch)})));
    return {c_ch, c_sp};
}

// ---- Pmm ----

Pmm::Pmm(nn::ParamStore& ps, const std::string& prefix, int depth, int base_channels)
    : depth_(depth) {
    if (depth < 1) throw std::invalid_argument("Pmm: depth must be >= 1");
    auto width = [base_channels](int scale) { return base_channels << scale; };

    entry_ = nn::ConvBlock(ps, prefix + ".entry", 1, base_channels, 3);
    for (int i = 0; i < depth; ++i) {
        enc_.emplace_back(ps, prefix + ".enc" + std::to_string(i), width(i));
        if (i + 1 < depth)
            down_.emplace_back(ps, prefix + ".down" + std::to_string(i), width(i), width(i + 1), 3,
                               /*stride=*/2);
    }
    up_.resize(static_cast<size_t>(depth - 1));
    merge_.resize(static_cast<size_t>(depth - 1));
    dec_.resize(static_cast<size_t>(depth - 1));
    for (int i = depth - 2; i >= 0; --i) {
        up_[static_cast<size_t>(i)] =
            nn::ConvBlock(ps, prefix + ".up" + std::to_string(i), width(i + 1), width(i), 3);
        merge_[static_cast<size_t>(i)] =
            nn::ConvBlock(ps, prefix + ".merge" + std::to_string(i), 2 * width(i), width(i), 3);
        dec_[static_cast<size_t>(i)] = StageBlock(ps, prefix + ".dec" + std::to_string(i), width(i));
    }
    head_ = nn::Conv2d(ps, prefix + ".head", base_channels, 1, 3);
}

Tensor Pmm::forward(const Tensor& x) const {
    const Shape s = x.shape();
    const int div = 1 << (depth_ - 1);
    if (s.h % div != 0 || s.w % div != 0)
        throw std::invalid_argument("Pmm: spatial dims not divisible by 2^(depth-1)");

    Tensor f = entry_.forward(x);
    std::vector<Tensor> skips;
    for (int i = 0; i < depth_; ++i) {
        f = enc_[static_cast<size_t>(i)].forward(f);
        if (i + 1 < depth_) {
            skips.push_back(f);
            f = down_[static_cast<size_t>(i)].forward(f);
        }
    }
    for (int i = depth_ - 2; i >= 0; --i) {
        f = up_[static_cast<size_t>(i)].forward(nn::upsample_nearest2x(f));
        f = merge_[static_cast<size_t>(i)].forward(
            nn::concat_channels({skips[static_cast<size_t>(i)], f}));
        f = dec_[static_cast<size_t>(i)].forward(f);
    }
    return head_.forward(f);
}

// ---- ShadowHead ----

ShadowHead::ShadowHead(nn::ParamStore& ps, const std::string& prefix, int m) {
    if (m < 1) throw std::invalid_argument("ShadowHead: needs at least one obstacle factor");
    conv_ = nn::ConvBlock(ps, prefix + ".conv", m, 1, 1);
}

Tensor ShadowHead::forward(const std::vector<Tensor>& factors) const {
    if (factors.size() < 2)
        throw std::invalid_argument("ShadowHead: stack has no obstacle factors");
    std::vector<Tensor> obstacles(factors.begin() + 1, factors.end());
    return conv_.forward(nn::concat_channels(obstacles));
}

// ---- RadioDUN ----

RadioDUN::RadioDUN(ModelConfig cfg, uint64_t seed) : config_(cfg), store_(seed) {
    config_.validate();
    init_ = InitModule(store_, "init", config_.m, config_.C);
    for (int k = 0; k < config_.K; ++k) {
        const std::string base = "block" + std::to_string(k);
        Block b;
        b.gdm = Gdm(store_, base + ".gdm", config_.m);
        b.drm = Drm(store_, base + ".drm", config_.m, config_.C, config_.drm_counterpart);
        b.pmm = Pmm(store_, base + ".pmm", config_.unet_depth, config_.base_channels);
        blocks_.push_back(std::move(b));
    }
    shadow_ = ShadowHead(store_, "shadow", config_.m);
}

ForwardResult RadioDUN::forward(const std::vector<ModelInput>& batch) const {
    if (batch.empty()) throw std::invalid_argument("RadioDUN: empty batch");
    const int B = static_cast<int>(batch.size());
    const long per = static_cast<long>(config_.H) * config_.W;

    Array y_all = Array::Zero(static_cast<long>(B) * per);
    Array mask_all = Array::Zero(static_cast<long>(B) * per);
    std::vector<Array> prior_all(static_cast<size_t>(config_.m) + 1,
                                 Array(static_cast<long>(B) * per));
    for (int n = 0; n < B; ++n) {
        const ModelInput& in = batch[static_cast<size_t>(n)];
        if (in.plan.h != config_.H || in.plan.w != config_.W)
            throw std::invalid_argument("RadioDUN: plan dims do not match ModelConfig");
        if (static_cast<int>(in.y.size()) != in.plan.count())
            throw std::invalid_argument("RadioDUN: observation length does not match plan");
        if (static_cast<int>(in.priors.size()) != config_.m + 1)
            throw std::invalid_argument("RadioDUN: expected m+1 prior channels");
        for (size_t k = 0; k < in.y.size(); ++k) {
            y_all(static_cast<long>(n) * per + in.plan.indices[k]) = in.y[k];
            mask_all(static_cast<long>(n) * per + in.plan.indices[k]) = 1.0;
        }
        for (int p = 0; p <= config_.m; ++p) {
            const GridMap& g = in.priors[static_cast<size_t>(p)];
            if (g.h != config_.H || g.w != config_.W)
                throw std::invalid_argument("RadioDUN: prior map dims do not match ModelConfig");
            for (long i = 0; i < per; ++i)
                prior_all[static_cast<size_t>(p)](static_cast<long>(n) * per + i) =
                    g[static_cast<size_t>(i)];
        }
    }

    const Shape map_shape{B, 1, config_.H, config_.W};
    Tensor y_scat = Tensor::from_array(map_shape, std::move(y_all));
    Tensor mask = Tensor::from_array(map_shape, std::move(mask_all));
    std::vector<Tensor> priors;
    for (auto& a : prior_all) priors.push_back(Tensor::from_array(map_shape, std::move(a)));

    auto [factors, x0, v] = init_.forward(y_scat, mask, priors);

    ForwardResult out;
    out.history.push_back(x0);
    for (const Block& b : blocks_) {
        factors = b.gdm.forward(factors, mask, y_scat);
        auto [x_rough, v_next] = b.drm.forward(factors, v);
        v = v_next;
        out.history.push_back(b.pmm.forward(x_rough));
    }
    out.x_hat = out.history.back();
    out.x_sigma = shadow_.forward(factors);
    out.factors = std::move(factors);
    return out;
}

void RadioDUN::set_gdm_scalars(int block, const std::vector<double>& beta, double eps) {
    blocks_.at(static_cast<size_t>(block)).gdm.set_scalars(beta, eps);
}

double RadioDUN::gdm_epsilon(int block) const {
    return blocks_.at(static_cast<size_t>(block)).gdm.epsilon();
}

std::vector<double> RadioDUN::gdm_betas(int block) const {
    return blocks_.at(static_cast<size_t>(block)).gdm.betas();
}

}  // namespace radiodun
