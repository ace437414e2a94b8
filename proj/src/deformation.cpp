#include "lavt/deformation.hpp"

#include <cmath>

namespace lavt {

DeformContext build_deform_context(const SeedSet& seeds, const std::vector<Mat4>& joint_tf) {
    const int64_t n = int64_t(seeds.seeds.size());
    const int64_t nj = int64_t(joint_tf.size());
    DeformContext ctx;
    ctx.seed_tf.resize(n);
    int64_t degenerate = 0;
    int64_t bad_seed = -1;
#pragma omp parallel for schedule(static) reduction(+ : degenerate) \
    reduction(max : bad_seed)
    for (int64_t i = 0; i < n; ++i) {
        const GaussianSeed& s = seeds.seeds[i];
        Mat4 t{};
        for (int64_t j = 0; j < nj; ++j) {
            float w = s.weights[j];
            if (w == 0.f) continue;
            for (int k = 0; k < 16; ++k) t.m[k] += w * joint_tf[j].m[k];
        }
        bool finite = true;
        for (int k = 0; k < 16; ++k) finite = finite && std::isfinite(t.m[k]);
        if (!finite) {
            bad_seed = std::max(bad_seed, i);
            continue;
        }
        SeedTransform& st = ctx.seed_tf[i];
        st.linear = t.rotation();
        st.trans = t.translation();
        float det = st.linear.det();
        if (det < 0.5f || det > 2.f) ++degenerate;
        st.rot = polar_rotation(st.linear);
        st.col_scale = {norm(st.linear.col(0)), norm(st.linear.col(1)),
                        norm(st.linear.col(2))};
    }
    LAVT_CHECK(bad_seed < 0, "pose_transform: non-finite blended transform at seed %lld",
               (long long)bad_seed);
    ctx.degenerate = degenerate;
    return ctx;
}

std::vector<float> warp_offsets(const SeedSet& seeds, const BodyModel& model,
                                const BodyParams& params) {
    LAVT_CHECK(int64_t(params.beta.size()) == model.n_shape &&
                   int64_t(params.psi.size()) == model.n_expr,
               "warp_shape: coefficient counts do not match the model");
    std::vector<float> feat = pose_feature(model, params.theta);
    const int64_t n = int64_t(seeds.seeds.size());
    std::vector<float> out(n * 3, 0.f);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const GaussianSeed& s = seeds.seeds[i];
        for (int c = 0; c < 3; ++c) {
            float acc = 0.f;
            for (int64_t b = 0; b < model.n_shape; ++b)
                acc += s.shape_off[c * model.n_shape + b] * params.beta[b];
            for (int64_t b = 0; b < model.n_expr; ++b)
                acc += s.expr_off[c * model.n_expr + b] * params.psi[b];
            for (int64_t b = 0; b < model.n_pose; ++b)
                acc += s.pose_off[c * model.n_pose + b] * feat[b];
            out[i * 3 + c] = acc;
        }
    }
    return out;
}

void warp_shape_inplace(GaussianBatch& batch, const SeedSet& seeds, const BodyModel& model,
                        const BodyParams& params, int64_t first_seed) {
    std::vector<float> off = warp_offsets(seeds, model, params);
    for (int64_t i = 0; i < batch.size(); ++i)
        for (int c = 0; c < 3; ++c) batch.mu[i * 3 + c] += off[(first_seed + i) * 3 + c];
}

void pose_transform_inplace(GaussianBatch& batch, const DeformContext& ctx,
                            int64_t first_seed) {
    const int64_t n = batch.size();
    LAVT_CHECK(first_seed + n <= int64_t(ctx.seed_tf.size()),
               "pose_transform: context covers %zu seeds, batch needs %lld",
               ctx.seed_tf.size(), (long long)(first_seed + n));
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const SeedTransform& st = ctx.seed_tf[first_seed + i];
        Vec3 mu{batch.mu[i * 3], batch.mu[i * 3 + 1], batch.mu[i * 3 + 2]};
        Vec3 out = st.linear * mu + st.trans;
        for (int c = 0; c < 3; ++c) batch.mu[i * 3 + c] = out[c];
        Mat3 r = batch.rotation(i);
        Mat3 rp = st.rot * r;
        for (int k = 0; k < 9; ++k) batch.rot[i * 9 + k] = rp.m[k];
        for (int c = 0; c < 3; ++c) batch.scale[i * 3 + c] *= st.col_scale[c];
    }
}

TapeGaussians warp_shape(const TapeGaussians& g, const std::vector<float>& offsets,
                         int64_t first_seed) {
    int64_t n = g.size();
    std::vector<float> slice_off(offsets.begin() + first_seed * 3,
                                 offsets.begin() + (first_seed + n) * 3);
    TapeGaussians out = g;
    out.mu = add(g.mu, Tensor::from_data({n, 3}, std::move(slice_off)));
    return out;
}

TapeGaussians pose_transform(const TapeGaussians& g, const DeformContext& ctx,
                             int64_t first_seed) {
    const int64_t n = g.size();
    LAVT_CHECK(first_seed + n <= int64_t(ctx.seed_tf.size()),
               "pose_transform: context covers %zu seeds, batch needs %lld",
               ctx.seed_tf.size(), (long long)(first_seed + n));

    TapeGaussians out = g;
    out.mu = Tensor::zeros({n, 3});
    out.rot = Tensor::zeros({n, 9});
    out.scale = Tensor::zeros({n, 3});

    const float* pm = g.mu.data();
    const float* pr = g.rot.data();
    const float* ps = g.scale.data();
    float* om = out.mu.data();
    float* orr = out.rot.data();
    float* os = out.scale.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        const SeedTransform& st = ctx.seed_tf[first_seed + i];
        Vec3 mu{pm[i * 3], pm[i * 3 + 1], pm[i * 3 + 2]};
        Vec3 mo = st.linear * mu + st.trans;
        for (int c = 0; c < 3; ++c) om[i * 3 + c] = mo[c];
        Mat3 r;
        for (int k = 0; k < 9; ++k) r.m[k] = pr[i * 9 + k];
        Mat3 rp = st.rot * r;
        for (int k = 0; k < 9; ++k) orr[i * 9 + k] = rp.m[k];
        for (int c = 0; c < 3; ++c) os[i * 3 + c] = ps[i * 3 + c] * st.col_scale[c];
    }

    if (tape_active_for({&g.mu, &g.rot, &g.scale})) {
        Tape* tape = Tape::active();
        tape->mark_output(out.mu);
        tape->mark_output(out.rot);
        tape->mark_output(out.scale);
        auto mi = g.mu.impl(), ri = g.rot.impl(), si = g.scale.impl();
        auto mo_ = out.mu.impl(), ro_ = out.rot.impl(), so_ = out.scale.impl();
        auto tf_slice = std::make_shared<std::vector<SeedTransform>>(
            ctx.seed_tf.begin() + first_seed, ctx.seed_tf.begin() + first_seed + n);
        tape->record([=]() {
            bool has_m = !mo_->grad.empty() && mi->requires_grad;
            bool has_r = !ro_->grad.empty() && ri->requires_grad;
            bool has_s = !so_->grad.empty() && si->requires_grad;
            if (!has_m && !has_r && !has_s) return;
            if (has_m && mi->grad.empty()) mi->grad.assign(mi->data.size(), 0.f);
            if (has_r && ri->grad.empty()) ri->grad.assign(ri->data.size(), 0.f);
            if (has_s && si->grad.empty()) si->grad.assign(si->data.size(), 0.f);
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < n; ++i) {
                const SeedTransform& st = (*tf_slice)[i];
                if (has_m) {
                    Vec3 gm{mo_->grad[i * 3], mo_->grad[i * 3 + 1], mo_->grad[i * 3 + 2]};
                    Vec3 back = st.linear.transposed() * gm;
                    for (int c = 0; c < 3; ++c) mi->grad[i * 3 + c] += back[c];
                }
                if (has_r) {
                    Mat3 gr;
                    for (int k = 0; k < 9; ++k) gr.m[k] = ro_->grad[i * 9 + k];
                    Mat3 back = st.rot.transposed() * gr;
                    for (int k = 0; k < 9; ++k) ri->grad[i * 9 + k] += back.m[k];
                }
                if (has_s)
                    for (int c = 0; c < 3; ++c)
                        si->grad[i * 3 + c] += so_->grad[i * 3 + c] * st.col_scale[c];
            }
        });
    }
    return out;
}

}  // namespace lavt
