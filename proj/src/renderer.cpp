#include "lavt/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "renderer_detail.hpp"

namespace lavt {

using namespace render_constants;

Camera look_at_camera(const Vec3& position, const Vec3& target, float focal, int width,
                      int height) {
    Vec3 forward = normalized(target - position);
    Vec3 up{0.f, 1.f, 0.f};
    Vec3 right = cross(forward, up);
    if (norm(right) < 1e-6f) right = {1.f, 0.f, 0.f};
    right = normalized(right);
    Vec3 down = cross(forward, right);
    Mat3 r;
    for (int c = 0; c < 3; ++c) {
        r(0, c) = right[c];
        r(1, c) = down[c];
        r(2, c) = forward[c];
    }
    Camera cam;
    cam.fx = cam.fy = focal;
    cam.cx = 0.5f * float(width);
    cam.cy = 0.5f * float(height);
    cam.width = width;
    cam.height = height;
    cam.world_to_cam = Mat4::from_rt(r, (r * position) * -1.f);
    return cam;
}

ProjectedGaussians project(const GaussianBatch& batch, const Camera& camera) {
    camera.validate();
    const int64_t n = batch.size();
    ProjectedGaussians p;
    p.mean2d.assign(n * 2, 0.f);
    p.cov2d.assign(n * 3, 0.f);
    p.conic.assign(n * 3, 0.f);
    p.depth.assign(n, 0.f);
    p.cam_pos.assign(n * 3, 0.f);
    p.radius.assign(n, 0.f);
    p.active.assign(n, 0);

    const Mat3 wr = camera.world_to_cam.rotation();
    const Vec3 wt = camera.world_to_cam.translation();
    int64_t culled = 0, degenerate = 0;

#pragma omp parallel for schedule(static) reduction(+ : culled, degenerate)
    for (int64_t i = 0; i < n; ++i) {
        Vec3 mu{batch.mu[i * 3], batch.mu[i * 3 + 1], batch.mu[i * 3 + 2]};
        Vec3 pc = wr * mu + wt;
        if (pc.z < kNearPlane) {
            ++culled;
            continue;
        }
        float x = pc.x, y = pc.y, z = pc.z;
        p.cam_pos[i * 3] = x;
        p.cam_pos[i * 3 + 1] = y;
        p.cam_pos[i * 3 + 2] = z;
        p.depth[i] = z;
        p.mean2d[i * 2] = camera.fx * x / z + camera.cx;
        p.mean2d[i * 2 + 1] = camera.fy * y / z + camera.cy;

        Mat3 r = batch.rotation(i);
        Vec3 s{batch.scale[i * 3], batch.scale[i * 3 + 1], batch.scale[i * 3 + 2]};
        Mat3 sigma = r * Mat3::diag({s.x * s.x, s.y * s.y, s.z * s.z}) * r.transposed();

        // T = J * W_rot, rows of the 2x3 EWA Jacobian times camera rotation
        float j00 = camera.fx / z, j02 = -camera.fx * x / (z * z);
        float j11 = camera.fy / z, j12 = -camera.fy * y / (z * z);
        float t0[3], t1[3];
        for (int c = 0; c < 3; ++c) {
            t0[c] = j00 * wr(0, c) + j02 * wr(2, c);
            t1[c] = j11 * wr(1, c) + j12 * wr(2, c);
        }
        auto quad = [&](const float* a, const float* b) {
            float acc = 0.f;
            for (int u = 0; u < 3; ++u)
                for (int v = 0; v < 3; ++v) acc += a[u] * sigma(u, v) * b[v];
            return acc;
        };
        float m00 = quad(t0, t0) + kCovDilation;
        float m01 = quad(t0, t1);
        float m11 = quad(t1, t1) + kCovDilation;
        float det = m00 * m11 - m01 * m01;
        float tr = m00 + m11;
        float disc = std::sqrt(std::max(0.f, tr * tr * 0.25f - det));
        float lmax = tr * 0.5f + disc;
        float lmin = tr * 0.5f - disc;
        if (det <= 0.f || lmin <= 0.f || lmax / lmin > kMaxCondition) {
            ++degenerate;
            continue;
        }
        p.cov2d[i * 3] = m00;
        p.cov2d[i * 3 + 1] = m01;
        p.cov2d[i * 3 + 2] = m11;
        p.conic[i * 3] = m11 / det;
        p.conic[i * 3 + 1] = -m01 / det;
        p.conic[i * 3 + 2] = m00 / det;
        p.radius[i] = std::ceil(3.f * std::sqrt(lmax));
        p.active[i] = 1;
    }
    p.culled_near = culled;
    p.skipped_degenerate = degenerate;
    return p;
}

RenderOutput render(const GaussianBatch& batch, const Camera& camera, const Vec3& background,
                    RenderMode mode, bool keep_context) {
    batch.validate();
    const int W = camera.width, H = camera.height;
    const int64_t n = batch.size();
    const int F = detail::feature_channels(mode);
    const bool detached = mode == RenderMode::silhouette_detached_full_opacity;

    auto ctx = std::make_shared<RenderForwardContext>();
    ctx->mode = mode;
    ctx->background = background;
    ctx->camera = camera;
    ctx->batch = batch;
    ctx->proj = project(batch, camera);
    const ProjectedGaussians& proj = ctx->proj;

    const int tiles_x = (W + kTileSize - 1) / kTileSize;
    const int tiles_y = (H + kTileSize - 1) / kTileSize;
    const int n_tiles = tiles_x * tiles_y;
    ctx->tiles_x = tiles_x;
    ctx->tiles_y = tiles_y;

    // tile ranges per gaussian
    std::vector<int32_t> tx0(n), tx1(n), ty0(n), ty1(n);
    std::vector<int64_t> counts(n + 1, 0);
    for (int64_t i = 0; i < n; ++i) {
        if (!proj.active[i]) continue;
        float r = proj.radius[i];
        float ux = proj.mean2d[i * 2], uy = proj.mean2d[i * 2 + 1];
        int x0 = std::max(0, int(std::floor((ux - r) / kTileSize)));
        int x1 = std::min(tiles_x - 1, int(std::floor((ux + r) / kTileSize)));
        int y0 = std::max(0, int(std::floor((uy - r) / kTileSize)));
        int y1 = std::min(tiles_y - 1, int(std::floor((uy + r) / kTileSize)));
        tx0[i] = x0;
        tx1[i] = x1;
        ty0[i] = y0;
        ty1[i] = y1;
        if (x1 >= x0 && y1 >= y0) counts[i + 1] = int64_t(x1 - x0 + 1) * (y1 - y0 + 1);
    }
    for (int64_t i = 0; i < n; ++i) counts[i + 1] += counts[i];
    ctx->pairs.resize(counts[n]);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        if (counts[i + 1] == counts[i]) continue;
        int64_t w = counts[i];
        for (int ty = ty0[i]; ty <= ty1[i]; ++ty)
            for (int tx = tx0[i]; tx <= tx1[i]; ++tx)
                ctx->pairs[w++] = {ty * tiles_x + tx, int32_t(i), proj.depth[i]};
    }
    std::sort(ctx->pairs.begin(), ctx->pairs.end(), [](const TilePair& a, const TilePair& b) {
        if (a.tile != b.tile) return a.tile < b.tile;
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.idx < b.idx;
    });
    ctx->tile_start.assign(n_tiles + 1, 0);
    for (const TilePair& pr : ctx->pairs) ctx->tile_start[pr.tile + 1]++;
    for (int t = 0; t < n_tiles; ++t) ctx->tile_start[t + 1] += ctx->tile_start[t];

    RenderOutput out;
    out.alpha = Tensor::zeros({H, W});
    if (mode == RenderMode::color) out.color = Tensor::zeros({H, W, 3});
    if (mode == RenderMode::segmentation) out.labels = Tensor::zeros({H, W, 5});
    out.culled_near = proj.culled_near;
    out.skipped_degenerate = proj.skipped_degenerate;
    ctx->final_t.assign(size_t(H) * W, 1.f);
    ctx->k_stop.assign(size_t(H) * W, 0);

    float* alpha_img = out.alpha.data();
    float* color_img = mode == RenderMode::color ? out.color.data() : nullptr;
    float* label_img = mode == RenderMode::segmentation ? out.labels.data() : nullptr;

#pragma omp parallel for schedule(dynamic, 1)
    for (int tile = 0; tile < n_tiles; ++tile) {
        int64_t kb = ctx->tile_start[tile], ke = ctx->tile_start[tile + 1];
        int px0 = (tile % tiles_x) * kTileSize;
        int py0 = (tile / tiles_x) * kTileSize;
        int px1 = std::min(px0 + kTileSize, W);
        int py1 = std::min(py0 + kTileSize, H);
        float feat[5];
        for (int py = py0; py < py1; ++py)
            for (int px = px0; px < px1; ++px) {
                float cx = px + 0.5f, cy = py + 0.5f;
                float t = 1.f;
                float acc[5] = {0, 0, 0, 0, 0};
                int64_t k = kb;
                for (; k < ke; ++k) {
                    int64_t i = ctx->pairs[k].idx;
                    float dx = cx - proj.mean2d[i * 2];
                    float dy = cy - proj.mean2d[i * 2 + 1];
                    auto e = detail::eval_sigma(dx, dy, &proj.conic[i * 3],
                                                detached ? 1.f : batch.alpha[i], true);
                    if (e.skip) continue;
                    if (F > 0) {
                        detail::gather_feature(mode, batch, i, feat);
                        for (int c = 0; c < F; ++c) acc[c] += feat[c] * e.sigma * t;
                    }
                    t *= 1.f - e.sigma;
                    if (t < kTransmittanceStop) {
                        ++k;
                        break;
                    }
                }
                int64_t pix = int64_t(py) * W + px;
                ctx->final_t[pix] = t;
                ctx->k_stop[pix] = int32_t(k);
                alpha_img[pix] = 1.f - t;
                if (color_img)
                    for (int c = 0; c < 3; ++c)
                        color_img[pix * 3 + c] = acc[c] + background[c] * t;
                if (label_img)
                    for (int c = 0; c < 5; ++c) label_img[pix * 5 + c] = acc[c];
            }
    }

    if (keep_context) out.ctx = ctx;
    return out;
}

RenderGrads render_backward(const RenderOutput& out, const Tensor& dcolor,
                            const Tensor& dalpha, const Tensor& dlabels) {
    LAVT_CHECK(out.ctx != nullptr, "render_backward: forward pass kept no context");
    const RenderForwardContext& ctx = *out.ctx;
    const GaussianBatch& batch = ctx.batch;
    const ProjectedGaussians& proj = ctx.proj;
    const Camera& camera = ctx.camera;
    const int W = camera.width, H = camera.height;
    const int64_t n = batch.size();
    const int F = detail::feature_channels(ctx.mode);
    const bool detached = ctx.mode == RenderMode::silhouette_detached_full_opacity;
    const bool color_mode = ctx.mode == RenderMode::color;

    const float* gc = dcolor.defined() ? dcolor.data() : nullptr;
    const float* ga = dalpha.defined() ? dalpha.data() : nullptr;
    const float* gl = dlabels.defined() ? dlabels.data() : nullptr;
    if (gc) LAVT_CHECK((dcolor.shape() == Shape{H, W, 3}), "render_backward: dcolor shape");
    if (ga) LAVT_CHECK((dalpha.shape() == Shape{H, W}), "render_backward: dalpha shape");
    if (gl) LAVT_CHECK((dlabels.shape() == Shape{H, W, 5}), "render_backward: dlabels shape");

    const int64_t n_pairs = int64_t(ctx.pairs.size());
    // per-pair partials, each written only by its tile's thread
    std::vector<float> pg_mean(n_pairs * 2, 0.f);
    std::vector<float> pg_conic(n_pairs * 3, 0.f);
    std::vector<float> pg_alpha(n_pairs, 0.f);
    std::vector<float> pg_feat(color_mode ? n_pairs * 3 : 0, 0.f);

    const int n_tiles = ctx.tiles_x * ctx.tiles_y;
#pragma omp parallel for schedule(dynamic, 1)
    for (int tile = 0; tile < n_tiles; ++tile) {
        int64_t kb = ctx.tile_start[tile], ke = ctx.tile_start[tile + 1];
        if (kb == ke) continue;
        int px0 = (tile % ctx.tiles_x) * kTileSize;
        int py0 = (tile / ctx.tiles_x) * kTileSize;
        int px1 = std::min(px0 + kTileSize, W);
        int py1 = std::min(py0 + kTileSize, H);
        float feat[5];
        for (int py = py0; py < py1; ++py)
            for (int px = px0; px < px1; ++px) {
                int64_t pix = int64_t(py) * W + px;
                float dpix[5] = {0, 0, 0, 0, 0};
                float dpx_alpha = ga ? ga[pix] : 0.f;
                if (gc)
                    for (int c = 0; c < 3; ++c) dpix[c] = gc[pix * 3 + c];
                if (gl)
                    for (int c = 0; c < 5; ++c) dpix[c] = gl[pix * 5 + c];
                bool any = dpx_alpha != 0.f;
                for (int c = 0; c < F && !any; ++c) any = dpix[c] != 0.f;
                if (!any) continue;

                const float t_n = ctx.final_t[pix];
                float t = t_n;
                float cx = px + 0.5f, cy = py + 0.5f;
                // suffix accumulators: S_c = sum_{j>i} F_j sigma_j T_j + bg_c T_N
                float s_acc[5] = {0, 0, 0, 0, 0};
                if (color_mode)
                    for (int c = 0; c < 3; ++c) s_acc[c] = ctx.background[c] * t_n;
                for (int64_t k = int64_t(ctx.k_stop[pix]) - 1; k >= kb; --k) {
                    int64_t i = ctx.pairs[k].idx;
                    float dx = cx - proj.mean2d[i * 2];
                    float dy = cy - proj.mean2d[i * 2 + 1];
                    const float* conic = &proj.conic[i * 3];
                    auto e = detail::eval_sigma(dx, dy, conic,
                                                detached ? 1.f : batch.alpha[i], true);
                    if (e.skip) continue;
                    float one_minus = 1.f - e.sigma;
                    t = t / one_minus;  // transmittance in front of i
                    float w = e.sigma * t;
                    float dsigma = dpx_alpha * (t_n / one_minus);
                    if (F > 0) {
                        detail::gather_feature(ctx.mode, batch, i, feat);
                        for (int c = 0; c < F; ++c)
                            dsigma += dpix[c] * (feat[c] * t - s_acc[c] / one_minus);
                        if (color_mode)
                            for (int c = 0; c < 3; ++c) pg_feat[k * 3 + c] += dpix[c] * w;
                        for (int c = 0; c < F; ++c) s_acc[c] += feat[c] * w;
                    }
                    if (e.capped) continue;  // the min() clamp blocks sigma gradients
                    if (!detached) pg_alpha[k] += dsigma * e.g;
                    float dg = dsigma * (detached ? 1.f : batch.alpha[i]);
                    float dpower = dg * e.g;
                    pg_conic[k * 3 + 0] += dpower * (-0.5f * dx * dx);
                    pg_conic[k * 3 + 1] += dpower * (-dx * dy);
                    pg_conic[k * 3 + 2] += dpower * (-0.5f * dy * dy);
                    pg_mean[k * 2 + 0] += dpower * (conic[0] * dx + conic[1] * dy);
                    pg_mean[k * 2 + 1] += dpower * (conic[1] * dx + conic[2] * dy);
                }
            }
    }

    // reduce pair partials in fixed pair order
    std::vector<float> g_mean(n * 2, 0.f), g_conic(n * 3, 0.f), g_alpha(n, 0.f),
        g_feat(n * 3, 0.f);
    for (int64_t k = 0; k < n_pairs; ++k) {
        int64_t i = ctx.pairs[k].idx;
        g_mean[i * 2] += pg_mean[k * 2];
        g_mean[i * 2 + 1] += pg_mean[k * 2 + 1];
        g_conic[i * 3] += pg_conic[k * 3];
        g_conic[i * 3 + 1] += pg_conic[k * 3 + 1];
        g_conic[i * 3 + 2] += pg_conic[k * 3 + 2];
        g_alpha[i] += pg_alpha[k];
        if (color_mode) {
            g_feat[i * 3] += pg_feat[k * 3];
            g_feat[i * 3 + 1] += pg_feat[k * 3 + 1];
            g_feat[i * 3 + 2] += pg_feat[k * 3 + 2];
        }
    }

    RenderGrads grads;
    grads.mu.assign(n * 3, 0.f);
    grads.rot.assign(n * 9, 0.f);
    grads.scale.assign(n * 3, 0.f);
    grads.alpha = std::move(g_alpha);
    grads.color = std::move(g_feat);

    const Mat3 wr = camera.world_to_cam.rotation();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        if (!proj.active[i]) continue;
        float x = proj.cam_pos[i * 3], y = proj.cam_pos[i * 3 + 1], z = proj.cam_pos[i * 3 + 2];
        float fx = camera.fx, fy = camera.fy;

        // conic -> cov2d: dM = -A G A with the half-off-diagonal convention
        float a = proj.conic[i * 3], b = proj.conic[i * 3 + 1], c = proj.conic[i * 3 + 2];
        float ga2 = g_conic[i * 3], gb2 = g_conic[i * 3 + 1] * 0.5f, gc2 = g_conic[i * 3 + 2];
        // A*G
        float ag00 = a * ga2 + b * gb2, ag01 = a * gb2 + b * gc2;
        float ag10 = b * ga2 + c * gb2, ag11 = b * gb2 + c * gc2;
        // dM = -(A*G)*A
        float dm00 = -(ag00 * a + ag01 * b);
        float dm01 = -(ag00 * b + ag01 * c);
        float dm10 = -(ag10 * a + ag11 * b);
        float dm11 = -(ag10 * b + ag11 * c);
        // symmetric full-matrix gradient of M (dilation passes through)
        float dmf[4] = {dm00, 0.5f * (dm01 + dm10), 0.5f * (dm01 + dm10), dm11};

        // rebuild T and Sigma
        Mat3 r = batch.rotation(i);
        Vec3 s{batch.scale[i * 3], batch.scale[i * 3 + 1], batch.scale[i * 3 + 2]};
        Mat3 sigma = r * Mat3::diag({s.x * s.x, s.y * s.y, s.z * s.z}) * r.transposed();
        float j00 = fx / z, j02 = -fx * x / (z * z);
        float j11 = fy / z, j12 = -fy * y / (z * z);
        float t0[3], t1[3];
        for (int cc = 0; cc < 3; ++cc) {
            t0[cc] = j00 * wr(0, cc) + j02 * wr(2, cc);
            t1[cc] = j11 * wr(1, cc) + j12 * wr(2, cc);
        }

        // dSigma = T^T dM T
        Mat3 dsig;
        for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v)
                dsig(u, v) = t0[u] * (dmf[0] * t0[v] + dmf[1] * t1[v]) +
                             t1[u] * (dmf[2] * t0[v] + dmf[3] * t1[v]);
        // dT = 2 dM T Sigma
        float ts0[3], ts1[3];
        for (int v = 0; v < 3; ++v) {
            ts0[v] = t0[0] * sigma(0, v) + t0[1] * sigma(1, v) + t0[2] * sigma(2, v);
            ts1[v] = t1[0] * sigma(0, v) + t1[1] * sigma(1, v) + t1[2] * sigma(2, v);
        }
        float dt0[3], dt1[3];
        for (int v = 0; v < 3; ++v) {
            dt0[v] = 2.f * (dmf[0] * ts0[v] + dmf[1] * ts1[v]);
            dt1[v] = 2.f * (dmf[2] * ts0[v] + dmf[3] * ts1[v]);
        }
        // dJ = dT W^T (J is sparse: entries 00, 02, 11, 12)
        float dj00 = 0.f, dj02 = 0.f, dj11 = 0.f, dj12 = 0.f;
        for (int cc = 0; cc < 3; ++cc) {
            dj00 += dt0[cc] * wr(0, cc);
            dj02 += dt0[cc] * wr(2, cc);
            dj11 += dt1[cc] * wr(1, cc);
            dj12 += dt1[cc] * wr(2, cc);
        }
        // mean2d and J entries -> camera-space position
        float gmx = g_mean[i * 2], gmy = g_mean[i * 2 + 1];
        float z2 = z * z;
        float gx = gmx * fx / z - dj02 * fx / z2;
        float gy = gmy * fy / z - dj12 * fy / z2;
        float gz = -gmx * fx * x / z2 - gmy * fy * y / z2 - dj00 * fx / z2 - dj11 * fy / z2 +
                   dj02 * 2.f * fx * x / (z2 * z) + dj12 * 2.f * fy * y / (z2 * z);
        // p_cam = W_rot mu + t
        for (int cc = 0; cc < 3; ++cc)
            grads.mu[i * 3 + cc] = wr(0, cc) * gx + wr(1, cc) * gy + wr(2, cc) * gz;

        // Sigma = R diag(s^2) R^T
        Mat3 dsym = dsig + dsig.transposed();
        Mat3 rd = r * Mat3::diag({s.x * s.x, s.y * s.y, s.z * s.z});
        Mat3 dr = dsym * rd;
        for (int k = 0; k < 9; ++k) grads.rot[i * 9 + k] = dr.m[k];
        Mat3 rtdr = r.transposed() * dsig * r;
        for (int cc = 0; cc < 3; ++cc)
            grads.scale[i * 3 + cc] = 2.f * s[cc] * rtdr(cc, cc);
    }
    return grads;
}

}  // namespace lavt
