#pragma once

#include <memory>

#include "lavt/camera.hpp"
#include "lavt/gaussians.hpp"
#include "lavt/tensor.hpp"

namespace lavt {

enum class RenderMode { color, silhouette, silhouette_detached_full_opacity, segmentation };

// Shared compositing constants. The tiled path always applies the spatial
// 3-sigma cutoff (it is what makes tiling exact); the reference renderer
// applies it only when asked to match.
namespace render_constants {
constexpr int kTileSize = 16;
constexpr float kPowerCutoff = -4.5f;  // 3-sigma Mahalanobis
constexpr float kMinSigma = 1.f / 255.f;
constexpr float kSigmaCap = 0.99f;
constexpr float kTransmittanceStop = 1e-4f;
constexpr float kNearPlane = 0.01f;
constexpr float kCovDilation = 0.3f;
constexpr float kMaxCondition = 1e8f;
}  // namespace render_constants

// EWA first-order projection of all Gaussians.
struct ProjectedGaussians {
    std::vector<float> mean2d;   // N*2, pixel coordinates
    std::vector<float> cov2d;    // N*3 (m00, m01, m11), dilated
    std::vector<float> conic;    // N*3, inverse of cov2d
    std::vector<float> depth;    // N, camera z
    std::vector<float> cam_pos;  // N*3
    std::vector<float> radius;   // N, 3-sigma pixel radius
    std::vector<uint8_t> active; // N
    int64_t culled_near = 0;
    int64_t skipped_degenerate = 0;
};

ProjectedGaussians project(const GaussianBatch& batch, const Camera& camera);

struct RenderForwardContext;  // stored intermediates for the backward pass

struct RenderOutput {
    Tensor color;   // (H,W,3), color mode only
    Tensor alpha;   // (H,W)
    Tensor labels;  // (H,W,5), segmentation mode only
    int64_t culled_near = 0;
    int64_t skipped_degenerate = 0;
    std::shared_ptr<RenderForwardContext> ctx;  // present when keep_context
};

struct RenderGrads {
    std::vector<float> mu;     // N*3
    std::vector<float> rot;    // N*9
    std::vector<float> scale;  // N*3
    std::vector<float> alpha;  // N
    std::vector<float> color;  // N*3
};

// Tiled front-to-back compositing, parallel over tiles, bit-stable at any
// thread count. Per-component and full-avatar renders share this one path.
RenderOutput render(const GaussianBatch& batch, const Camera& camera, const Vec3& background,
                    RenderMode mode, bool keep_context = false);

// Analytic gradients of the stored forward pass. Pass undefined tensors for
// output channels that received no gradient. In detached-opacity mode the
// opacity gradient is identically zero.
RenderGrads render_backward(const RenderOutput& out, const Tensor& dcolor,
                            const Tensor& dalpha, const Tensor& dlabels);

// Brute-force per-pixel global-sort oracle; no tiling, and no spatial cutoff
// unless match_cutoff is set.
RenderOutput render_reference(const GaussianBatch& batch, const Camera& camera,
                              const Vec3& background, RenderMode mode,
                              bool match_cutoff = false);

}  // namespace lavt
