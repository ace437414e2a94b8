#pragma once

#include <vector>

#include "lavt/tensor.hpp"

namespace lavt {

// Elementwise binary ops with trailing-dimension broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);

// y = scale * x + shift
Tensor affine(const Tensor& x, float scale, float shift);
inline Tensor mul(const Tensor& x, float s) { return affine(x, s, 0.f); }
inline Tensor add(const Tensor& x, float s) { return affine(x, 1.f, s); }
inline Tensor neg(const Tensor& x) { return affine(x, -1.f, 0.f); }

Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k) x (k,n)

// NCHW convolution, stride 1, zero padding preserving spatial size
// (odd kernels). weight (K,C,kh,kw), bias (K).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct BatchNorm2d {
    Tensor gamma, beta;               // trainable affine
    Tensor running_mean, running_var; // buffers
    float momentum = 0.1f;
    float eps = 1e-5f;
    static BatchNorm2d create(int64_t channels);
};
// training=true uses batch statistics over (N,H,W) and updates the running
// buffers; training=false freezes to the running statistics.
Tensor batch_norm2d(const Tensor& x, BatchNorm2d& bn, bool training);

// map (C,H,W) sampled at uv (N,2) in [0,1]^2 -> (N,C). uv=(0,0) is texel
// (0,0), uv=(1,1) is texel (H-1,W-1); coordinates clamp to the texel range.
// uv is treated as a constant (no gradient flows to it).
Tensor bilinear_sample(const Tensor& map, const Tensor& uv);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor tanh_op(const Tensor& x);

// Elementwise Huber penalty of (pred - target); quadratic within delta,
// linear outside.
Tensor huber(const Tensor& pred, const Tensor& target, float delta);

Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t length);
Tensor reshape(const Tensor& x, Shape new_shape);

// Mean of squared horizontal+vertical neighbor differences over (C,H,W).
Tensor tv_loss(const Tensor& x);

}  // namespace lavt
