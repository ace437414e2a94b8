#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lavt/renderer.hpp"

namespace lavt::detail {

// Per-contribution evaluation shared verbatim by the tiled renderer, its
// backward pass and the reference oracle, so matched-cutoff comparisons see
// identical arithmetic.
struct SigmaEval {
    float sigma = 0.f;
    float g = 0.f;
    bool skip = true;
    bool capped = false;
};

inline SigmaEval eval_sigma(float dx, float dy, const float* conic, float alpha_eff,
                            bool spatial_cutoff) {
    using namespace render_constants;
    SigmaEval e;
    float power = -0.5f * (conic[0] * dx * dx + conic[2] * dy * dy) - conic[1] * dx * dy;
    if (spatial_cutoff && power < kPowerCutoff) return e;
    if (power > 0.f) return e;
    e.g = std::exp(power);
    float sigma = alpha_eff * e.g;
    if (sigma < kMinSigma) return e;
    if (sigma > kSigmaCap) {
        sigma = kSigmaCap;
        e.capped = true;
    }
    e.sigma = sigma;
    e.skip = false;
    return e;
}

inline int feature_channels(RenderMode mode) {
    switch (mode) {
        case RenderMode::color: return 3;
        case RenderMode::segmentation: return 5;
        default: return 0;
    }
}

// feature vector of gaussian i for the mode (color or one-hot label)
inline void gather_feature(RenderMode mode, const GaussianBatch& batch, int64_t i, float* f) {
    if (mode == RenderMode::color) {
        f[0] = batch.color[i * 3];
        f[1] = batch.color[i * 3 + 1];
        f[2] = batch.color[i * 3 + 2];
    } else if (mode == RenderMode::segmentation) {
        for (int c = 0; c < 5; ++c) f[c] = 0.f;
        f[batch.label[i]] = 1.f;
    }
}

}  // namespace lavt::detail

namespace lavt {

struct TilePair {
    int32_t tile;
    int32_t idx;
    float depth;
};

// Everything the backward pass needs, copied so the context owns its data.
struct RenderForwardContext {
    RenderMode mode = RenderMode::color;
    Vec3 background;
    Camera camera;
    GaussianBatch batch;
    ProjectedGaussians proj;
    std::vector<TilePair> pairs;
    std::vector<int64_t> tile_start;  // tiles+1 prefix into pairs
    std::vector<float> final_t;       // H*W
    std::vector<int32_t> k_stop;      // H*W, pair index after the last processed
    int tiles_x = 0, tiles_y = 0;
};

}  // namespace lavt
