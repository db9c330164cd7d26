#pragma once

#include <vector>

#include "radiodun/nn/tensor.hpp"

namespace radiodun::nn {

// ---- elementwise arithmetic (matching shapes) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double k);

// ---- scalar-tensor broadcasts ----
/// a * s with s a {1,1,1,1} tensor (for learnable step sizes).
Tensor mul_scalar_t(const Tensor& a, const Tensor& s);
/// a - s broadcast over all elements of a.
Tensor sub_scalar_t(const Tensor& a, const Tensor& s);
Tensor add_scalar_t(const Tensor& a, const Tensor& s);

// ---- channel / spatial broadcasts ----
/// x {N,C,H,W} * s {N,C,1,1}, broadcast over spatial positions.
Tensor mul_channel(const Tensor& x, const Tensor& s);
/// x {N,C,H,W} * s {N,1,H,W}, broadcast over channels.
Tensor mul_spatial(const Tensor& x, const Tensor& s);

// ---- nonlinearities ----
Tensor sigmoid(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.01);
Tensor softplus(const Tensor& a);

/// sign(z) * max(|z| - eps, 0) with eps a scalar tensor; the subgradient at the
/// kink |z| = eps is 0 for both arguments.
Tensor soft_threshold_t(const Tensor& z, const Tensor& eps);

// ---- reductions ----
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);

// ---- pooling ----
Tensor global_avg_pool(const Tensor& x);  // {N,C,H,W} -> {N,C,1,1}
Tensor global_max_pool(const Tensor& x);  // {N,C,H,W} -> {N,C,1,1}
Tensor channel_mean(const Tensor& x);     // {N,C,H,W} -> {N,1,H,W}
Tensor channel_max(const Tensor& x);      // {N,C,H,W} -> {N,1,H,W}

// ---- structure ----
Tensor concat_channels(const std::vector<Tensor>& xs);
Tensor reshape(const Tensor& x, Shape s);  // same numel, copies
Tensor upsample_nearest2x(const Tensor& x);

// ---- matrix ops on {N,1,P,Q} tensors ----
Tensor transpose_last2(const Tensor& x);
Tensor bmm(const Tensor& a, const Tensor& b);  // {N,1,P,Q} x {N,1,Q,R} -> {N,1,P,R}
Tensor softmax_lastdim(const Tensor& x);

// ---- convolution ----
/// x {N,C,H,W}, w {O,C/groups,kh,kw}, optional bias {O,1,1,1}; zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad, int groups);

// ---- normalization ----
/// BatchNorm over (N,H,W) per channel. In training mode uses batch statistics and
/// updates the running buffers in place; in eval mode uses the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor running_mean,
                  Tensor running_var, bool training, double momentum = 0.1, double eps = 1e-5);

/// LayerNorm across channels at each (n,h,w) position, with per-channel affine.
Tensor layer_norm_channel(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          double eps = 1e-5);

}  // namespace radiodun::nn
