#include <algorithm>
#include <numeric>

#include "renderer_detail.hpp"

namespace lavt {

using namespace render_constants;

// Naive oracle: global depth sort, every gaussian evaluated at every pixel.
RenderOutput render_reference(const GaussianBatch& batch, const Camera& camera,
                              const Vec3& background, RenderMode mode, bool match_cutoff) {
    batch.validate();
    const int W = camera.width, H = camera.height;
    const int F = detail::feature_channels(mode);
    const bool detached = mode == RenderMode::silhouette_detached_full_opacity;

    ProjectedGaussians proj = project(batch, camera);
    std::vector<int64_t> order;
    for (int64_t i = 0; i < batch.size(); ++i)
        if (proj.active[i]) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        if (proj.depth[a] != proj.depth[b]) return proj.depth[a] < proj.depth[b];
        return a < b;
    });

    RenderOutput out;
    out.alpha = Tensor::zeros({H, W});
    if (mode == RenderMode::color) out.color = Tensor::zeros({H, W, 3});
    if (mode == RenderMode::segmentation) out.labels = Tensor::zeros({H, W, 5});
    out.culled_near = proj.culled_near;
    out.skipped_degenerate = proj.skipped_degenerate;

    float* alpha_img = out.alpha.data();
    float* color_img = mode == RenderMode::color ? out.color.data() : nullptr;
    float* label_img = mode == RenderMode::segmentation ? out.labels.data() : nullptr;

    for (int py = 0; py < H; ++py)
        for (int px = 0; px < W; ++px) {
            float cx = px + 0.5f, cy = py + 0.5f;
            float t = 1.f;
            float acc[5] = {0, 0, 0, 0, 0};
            float feat[5];
            for (int64_t i : order) {
                float dx = cx - proj.mean2d[i * 2];
                float dy = cy - proj.mean2d[i * 2 + 1];
                auto e = detail::eval_sigma(dx, dy, &proj.conic[i * 3],
                                            detached ? 1.f : batch.alpha[i], match_cutoff);
                if (e.skip) continue;
                if (F > 0) {
                    detail::gather_feature(mode, batch, i, feat);
                    for (int c = 0; c < F; ++c) acc[c] += feat[c] * e.sigma * t;
                }
                t *= 1.f - e.sigma;
                if (t < kTransmittanceStop) break;
            }
            int64_t pix = int64_t(py) * W + px;
            alpha_img[pix] = 1.f - t;
            if (color_img)
                for (int c = 0; c < 3; ++c) color_img[pix * 3 + c] = acc[c] + background[c] * t;
            if (label_img)
                for (int c = 0; c < 5; ++c) label_img[pix * 5 + c] = acc[c];
        }
    return out;
}

}  // namespace lavt
