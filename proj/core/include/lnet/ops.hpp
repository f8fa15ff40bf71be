#pragma once

#include "lnet/autograd.hpp"

namespace lnet::ops {

/// 2-D convolution, NHWC input, kernel laid out (kh, kw, in, out). `bias` may be null.
/// Output side is (side + 2*pad - k) / stride + 1.
Var conv2d(const Var& x, const Var& kernel, const Var& bias, int stride, int pad);

Var relu(const Var& x);
/// x * sigmoid(x), a smooth rectifier.
Var silu(const Var& x);
Var sigmoid(const Var& x);

/// Parameter-free bilinear enlargement by an integer factor with half-pixel
/// centres: output i samples input coordinate (i + 0.5) / factor - 0.5, clamped.
Var upsample_bilinear(const Var& x, int factor);

Var concat_channels(const Var& a, const Var& b);

/// Max pooling with kernel == stride == `k`; ties resolve to the first position.
Var max_pool(const Var& x, int k);
/// Per-channel maximum over all spatial positions: (n,h,w,c) -> (n,1,1,c).
Var global_max_pool(const Var& x);
/// Per-channel mean over all spatial positions: (n,h,w,c) -> (n,1,1,c).
Var global_avg_pool(const Var& x);
/// Maximum across channels at each position: (n,h,w,c) -> (n,h,w,1).
Var channel_max(const Var& x);
/// Replicates a single-channel map `k` times: (n,h,w,1) -> (n,h,w,k).
Var broadcast_channels(const Var& x, int k);

Var mul(const Var& a, const Var& b);
/// alpha * a + beta * b for equally shaped inputs.
Var lin_comb(double alpha, const Var& a, double beta, const Var& b);

/// Fully connected layer on (n,1,1,in) with weights (1,1,in,out) and bias (1,1,1,out).
Var linear(const Var& x, const Var& weight, const Var& bias);
/// Softmax over the channel axis of an (n,1,1,c) tensor.
Var softmax(const Var& x);

}  // namespace lnet::ops
