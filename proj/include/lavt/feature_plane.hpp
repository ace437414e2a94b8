#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "lavt/ops.hpp"
#include "lavt/render_op.hpp"
#include "lavt/template_atlas.hpp"

namespace lavt {

constexpr int kPlaneChannels = 12;
constexpr int kPlaneRes = 128;
constexpr int kNumLayers = 3;
constexpr int kDecoderHidden = 32;

// zero-initialized layered plane, stored width-concatenated (12,128,384)
Tensor empty_plane();
void check_plane_shape(const Tensor& plane);

// The two shared decoders. Each is conv(6->32) + batch norm + SiLU followed
// by per-attribute head convolutions. Offset and covariance heads use the
// U(-1e-5, +1e-1) init with zero biases; the symmetric switch narrows that
// to U(-1e-5, +1e-5).
struct DecoderParams {
    Tensor dg_conv_w, dg_conv_b;
    BatchNorm2d dg_bn;
    Tensor dg_offset_w, dg_offset_b;   // linear head, 3 channels
    Tensor dg_opacity_w, dg_opacity_b; // sigmoid head, 1 channel

    Tensor dt_conv_w, dt_conv_b;
    BatchNorm2d dt_bn;
    Tensor dt_color_w, dt_color_b;  // sigmoid, 3
    Tensor dt_rot_w, dt_rot_b;      // sigmoid, 3
    Tensor dt_scale_w, dt_scale_b;  // sigmoid, 3

    static DecoderParams init(Rng& rng, bool symmetric_head_init = false);

    std::vector<Tensor> trainable();  // weights, biases, bn affine
    std::vector<std::pair<std::string, Tensor>> named_tensors();  // incl. bn buffers
    void mark_trainable();

    void save(const std::string& path) const;
    static DecoderParams load(const std::string& path);
};

// Decoded per-layer attribute maps over the 128x128 atlas.
struct AttributeMaps {
    std::array<Tensor, kNumLayers> offset;   // (3,H,W), unbounded
    std::array<Tensor, kNumLayers> opacity;  // (1,H,W), in (0,1)
    std::array<Tensor, kNumLayers> color;    // (3,H,W), in (0,1)
    std::array<Tensor, kNumLayers> rot;      // (3,H,W), in (0,1)
    std::array<Tensor, kNumLayers> scale;    // (3,H,W), in (0,1)
};

// tanh-normalizes the plane, splits channels 0-5 / 6-11 into the geometry and
// texture decoders, and applies them to each layer independently.
AttributeMaps decode(const Tensor& plane, DecoderParams& params, bool training);

struct ExtractConfig {
    float offset_radius = 0.1f;  // meters of position residual per unit output
};

struct ExtractedAvatar {
    std::array<TapeGaussians, kNumLabels> components;
    std::array<Tensor, kNumLabels> raw_offsets;  // (Nc,3) decoded residuals
    TapeGaussians all;                           // concatenated in label order
};

// Bilinear-samples each seed's layer maps at its uv and assembles renderable
// attributes: mu = mu0 + offset*radius, s = s0 * 2*ds, alpha/color direct,
// r = r0 composed with the residual rotation Rodrigues((dr-0.5)*pi/2).
ExtractedAvatar extract_attributes(const AttributeMaps& maps, const SeedSet& seeds,
                                   const ExtractConfig& cfg = {});

// Detached convenience returning plain arrays.
GaussianBatch extract_gaussians(const AttributeMaps& maps, const SeedSet& seeds,
                                const ExtractConfig& cfg = {});

// Residual rotation compose as a custom-gradient op: out_i = r0_i *
// rodrigues((dr_i - 0.5) * pi/2), gradients flowing to dr.
Tensor compose_rotation(const Tensor& dr, const std::vector<Mat3>& r0);

}  // namespace lavt
