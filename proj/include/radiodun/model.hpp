#pragma once

#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "radiodun/grid.hpp"
#include "radiodun/nn/modules.hpp"
#include "radiodun/sampling.hpp"

namespace radiodun {

struct ModelConfig {
    int K = 3;              // unfolding blocks
    int C = 32;             // factoring-feature channels
    int m = 2;              // obstacle factors (total factors = m + 1)
    int unet_depth = 3;     // PMM encoder scales
    int base_channels = 32; // PMM first-scale width
    int H = 256;
    int W = 256;
    bool drm_counterpart = false;  // ablation: plain 1x1 fusion instead of the DRM

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

/// One training/evaluation sample: sparse observations with their plan, plus the
/// prior channels P_0..P_m (distance map first, then binary obstacle maps).
struct ModelInput {
    std::vector<double> y;
    SamplingPlan plan;
    std::vector<GridMap> priors;
};

struct ForwardResult {
    nn::Tensor x_hat;                  // {B,1,H,W} final estimate
    nn::Tensor x_sigma;                // {B,1,H,W} estimated shadowing factor
    std::vector<nn::Tensor> history;   // X^0 then each block's refined map
    std::vector<nn::Tensor> factors;   // final stack s_0..s_m
};

// ---- tensor/grid bridging ----

/// Stacks B same-shaped maps into a constant {B,1,H,W} tensor.
nn::Tensor batch_from_grids(const std::vector<GridMap>& maps);
/// Extracts sample n of a {B,1,H,W} tensor.
GridMap grid_from_batch(const nn::Tensor& t, int n);
/// {1,1,H,W} adjoint scatter of one observation vector.
nn::Tensor scatter_tensor(const std::vector<double>& y, const SamplingPlan& plan);
/// {1,1,H,W} binary mask of the sampled cells.
nn::Tensor mask_tensor(const SamplingPlan& plan);

// ---- differentiable training losses (GridMap versions in objectives.hpp are the
//      scalar reference path used for reporting) ----

nn::Tensor mse_t(const nn::Tensor& x_gt, const nn::Tensor& x_hat);
/// Centering inside uses the per-sample spatial mean of x_sigma.
nn::Tensor shadowing_loss_t(const nn::Tensor& x_sigma, const nn::Tensor& x_gt,
                            const nn::Tensor& x_hat);
nn::Tensor total_loss_t(const nn::Tensor& x_gt, const nn::Tensor& x_hat,
                        const nn::Tensor& x_sigma, double mu);

// ---- model components ----

/// Factor-to-feature transform: two convolution blocks lifting the concatenated
/// factors to the C-channel factoring feature.
class FactorLift {
public:
    FactorLift() = default;
    FactorLift(nn::ParamStore& ps, const std::string& prefix, int in_ch, int channels);
    nn::Tensor forward(const nn::Tensor& x) const;

private:
    nn::ConvBlock b1_, b2_;
};

/// Initialization: per-factor two-block nets over (y, mask, earlier factors,
/// remaining priors), a 1x1 block composing X^0, and the first factoring feature.
class InitModule {
public:
    InitModule() = default;
    InitModule(nn::ParamStore& ps, const std::string& prefix, int m, int channels);
    std::tuple<std::vector<nn::Tensor>, nn::Tensor, nn::Tensor> forward(
        const nn::Tensor& y_scat, const nn::Tensor& mask,
        const std::vector<nn::Tensor>& priors) const;

private:
    struct FactorNet {
        nn::ConvBlock b1, b2;
    };
    std::vector<FactorNet> nets_;
    nn::ConvBlock x0_;
    FactorLift v0_;
    int m_ = 0;
};

/// Unfolded gradient step with learnable per-factor step sizes and a softplus-
/// reparameterized soft threshold; arithmetic matches the classical ao_step.
class Gdm {
public:
    Gdm() = default;
    Gdm(nn::ParamStore& ps, const std::string& prefix, int m, double beta_init = 0.5,
        double eps_init = 1e-4);
    std::vector<nn::Tensor> forward(const std::vector<nn::Tensor>& factors,
                                    const nn::Tensor& mask, const nn::Tensor& y_scat) const;

    /// Overwrites the scalars; eps must be >= 0 and is stored via inverse softplus.
    void set_scalars(const std::vector<double>& beta, double eps);
    std::vector<double> betas() const;
    double epsilon() const;

private:
    std::vector<nn::Tensor> beta_;
    nn::Tensor eps_raw_;
};

/// Channel-wise self-attention: layer norm, Q/K/V through a 1x1 block and a
/// depthwise 3x3 block, rowwise-softmax(Q K^T) applied to V. The residual around
/// it belongs to the enclosing stage block.
class Cam {
public:
    Cam() = default;
    Cam(nn::ParamStore& ps, const std::string& prefix, int channels);
    nn::Tensor forward(const nn::Tensor& f) const;
    /// Rowwise-stochastic channel attention {N,1,C,C}; diagnostic view of forward.
    nn::Tensor attention(const nn::Tensor& f) const;

private:
    nn::LayerNormChannel ln_;
    nn::ConvBlock q_pw_, q_dw_, k_pw_, k_dw_, v_pw_, v_dw_;
};

/// Hybrid local/global unit: convolution block and CAM in parallel, fused by
/// addition, then a three-block feed-forward network, shortcuts around both.
class StageBlock {
public:
    StageBlock() = default;
    StageBlock(nn::ParamStore& ps, const std::string& prefix, int channels);
    nn::Tensor forward(const nn::Tensor& f) const;

private:
    nn::ConvBlock conv_path_;
    Cam cam_;
    nn::ConvBlock ffn1_, ffn2_, ffn3_;
};

/// Dynamic reweighting: lifts the current factors to v^k, reweights the previous
/// feature channelwise then spatially, and fuses both paths into the rough map.
/// The counterpart ablation replaces all of it with a 1x1 fusion of the factors
/// and passes the feature through unchanged.
class Drm {
public:
    Drm() = default;
    Drm(nn::ParamStore& ps, const std::string& prefix, int m, int channels, bool counterpart);
    /// factors: m+1 tensors {N,1,H,W}; v_prev: {N,C,H,W}. Returns (X', v^k).
    std::pair<nn::Tensor, nn::Tensor> forward(const std::vector<nn::Tensor>& factors,
                                              const nn::Tensor& v_prev) const;
    /// (channel map {N,C,1,1}, spatial map {N,1,H,W}); throws for the counterpart.
    std::pair<nn::Tensor, nn::Tensor> attention(const nn::Tensor& v_prev) const;

private:
    bool counterpart_ = false;
    FactorLift lift_;
    nn::Conv2d ch_linear_;
    nn::ConvBlock sp_conv_;
    nn::ConvBlock refine_;
    nn::ConvBlock dconv_;
    nn::ConvBlock fuse_;
    nn::ConvBlock counter_;
};

/// U-shaped proximal network: stage blocks per scale, strided-convolution
/// downsampling, nearest-neighbor upsampling with skip concatenation, and a
/// plain convolution head back to one channel.
class Pmm {
public:
    Pmm() = default;
    Pmm(nn::ParamStore& ps, const std::string& prefix, int depth, int base_channels);
    nn::Tensor forward(const nn::Tensor& x) const;

private:
    nn::ConvBlock entry_;
    std::vector<StageBlock> enc_;
    std::vector<nn::ConvBlock> down_;
    std::vector<nn::ConvBlock> up_;
    std::vector<nn::ConvBlock> merge_;
    std::vector<StageBlock> dec_;
    nn::Conv2d head_;
    int depth_ = 1;
};

/// 1x1 block integrating the obstacle factors s_1..s_m into the shadowing map.
class ShadowHead {
public:
    ShadowHead() = default;
    ShadowHead(nn::ParamStore& ps, const std::string& prefix, int m);
    nn::Tensor forward(const std::vector<nn::Tensor>& factors) const;

private:
    nn::ConvBlock conv_;
};

/// The full unfolding network: initialization, K blocks of GDM -> DRM -> PMM with
/// the factoring feature carried between blocks, and the shadowing head over the
/// final factor stack.
class RadioDUN {
public:
    RadioDUN(ModelConfig cfg, uint64_t seed);

    ForwardResult forward(const std::vector<ModelInput>& batch) const;

    const ModelConfig& config() const { return config_; }
    nn::ParamStore& params() { return store_; }
    const nn::ParamStore& params() const { return store_; }
    void set_train(bool on) { store_.set_training(on); }

    void set_gdm_scalars(int block, const std::vector<double>& beta, double eps);
    double gdm_epsilon(int block) const;
    std::vector<double> gdm_betas(int block) const;

private:
    struct Block {
        Gdm gdm;
        Drm drm;
        Pmm pmm;
    };

    ModelConfig config_;
    nn::ParamStore store_;
    InitModule init_;
    std::vector<Block> blocks_;
    ShadowHead shadow_;
};

}  // namespace radiodun
