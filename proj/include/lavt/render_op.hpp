#pragma once

#include <vector>

#include "lavt/ops.hpp"
#include "lavt/renderer.hpp"

namespace lavt {

// Gaussian attributes living on the tape; labels are constants.
struct TapeGaussians {
    Tensor mu;     // (N,3)
    Tensor rot;    // (N,9)
    Tensor scale;  // (N,3)
    Tensor alpha;  // (N)
    Tensor color;  // (N,3)
    std::vector<uint8_t> label;

    int64_t size() const { return alpha.defined() ? alpha.numel() : 0; }
    GaussianBatch to_batch() const;
};

// Row-wise concatenation (tape-tracked) in the given order.
TapeGaussians concat_gaussians(const std::vector<TapeGaussians>& parts);

struct RenderImages {
    Tensor color;   // (H,W,3) for color mode
    Tensor alpha;   // (H,W)
    Tensor labels;  // (H,W,5) for segmentation mode
    int64_t skipped_degenerate = 0;
};

// The rasterizer as a custom-gradient tape operation. Gradients reach mu,
// rot, scale, alpha and color; detached-opacity mode yields zero alpha
// gradients by construction.
RenderImages render_op(const TapeGaussians& g, const Camera& camera, const Vec3& background,
                       RenderMode mode);

}  // namespace lavt
