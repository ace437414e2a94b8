#include "lavt/feature_plane.hpp"

#include <cmath>

#include "lavt/checkpoint.hpp"

namespace lavt {

Tensor empty_plane() { return Tensor::zeros({kPlaneChannels, kPlaneRes, kPlaneRes * kNumLayers}); }

void check_plane_shape(const Tensor& plane) {
    LAVT_CHECK((plane.shape() ==
                Shape{kPlaneChannels, kPlaneRes, kPlaneRes * kNumLayers}),
               "plane must be (12,128,384), got %s", shape_str(plane.shape()).c_str());
}

namespace {

Tensor conv_init(Rng& rng, int64_t out_ch, int64_t in_ch) {
    float bound = 1.f / std::sqrt(float(in_ch * 9));
    return Tensor::rand_uniform({out_ch, in_ch, 3, 3}, rng, -bound, bound);
}

}  // namespace

DecoderParams DecoderParams::init(Rng& rng, bool symmetric_head_init) {
    DecoderParams p;
    const int64_t h = kDecoderHidden;
    float head_hi = symmetric_head_init ? 1e-5f : 1e-1f;

    p.dg_conv_w = conv_init(rng, h, 6);
    p.dg_conv_b = Tensor::zeros({h});
    p.dg_bn = BatchNorm2d::create(h);
    p.dg_offset_w = Tensor::rand_uniform({3, h, 3, 3}, rng, -1e-5f, head_hi);
    p.dg_offset_b = Tensor::zeros({3});
    p.dg_opacity_w = conv_init(rng, 1, h);
    p.dg_opacity_b = Tensor::zeros({1});

    p.dt_conv_w = conv_init(rng, h, 6);
    p.dt_conv_b = Tensor::zeros({h});
    p.dt_bn = BatchNorm2d::create(h);
    p.dt_color_w = conv_init(rng, 3, h);
    p.dt_color_b = Tensor::zeros({3});
    p.dt_rot_w = Tensor::rand_uniform({3, h, 3, 3}, rng, -1e-5f, head_hi);
    p.dt_rot_b = Tensor::zeros({3});
    p.dt_scale_w = Tensor::rand_uniform({3, h, 3, 3}, rng, -1e-5f, head_hi);
    p.dt_scale_b = Tensor::zeros({3});
    return p;
}

std::vector<Tensor> DecoderParams::trainable() {
    return {dg_conv_w, dg_conv_b, dg_bn.gamma, dg_bn.beta, dg_offset_w, dg_offset_b,
            dg_opacity_w, dg_opacity_b, dt_conv_w, dt_conv_b, dt_bn.gamma, dt_bn.beta,
            dt_color_w, dt_color_b, dt_rot_w, dt_rot_b, dt_scale_w, dt_scale_b};
}

void DecoderParams::mark_trainable() {
    for (Tensor t : trainable()) t.set_requires_grad(true);
}

std::vector<std::pair<std::string, Tensor>> DecoderParams::named_tensors() {
    return {
        {"dg.conv.w", dg_conv_w},      {"dg.conv.b", dg_conv_b},
        {"dg.bn.gamma", dg_bn.gamma},  {"dg.bn.beta", dg_bn.beta},
        {"dg.bn.mean", dg_bn.running_mean}, {"dg.bn.var", dg_bn.running_var},
        {"dg.offset.w", dg_offset_w},  {"dg.offset.b", dg_offset_b},
        {"dg.opacity.w", dg_opacity_w}, {"dg.opacity.b", dg_opacity_b},
        {"dt.conv.w", dt_conv_w},      {"dt.conv.b", dt_conv_b},
        {"dt.bn.gamma", dt_bn.gamma},  {"dt.bn.beta", dt_bn.beta},
        {"dt.bn.mean", dt_bn.running_mean}, {"dt.bn.var", dt_bn.running_var},
        {"dt.color.w", dt_color_w},    {"dt.color.b", dt_color_b},
        {"dt.rot.w", dt_rot_w},        {"dt.rot.b", dt_rot_b},
        {"dt.scale.w", dt_scale_w},    {"dt.scale.b", dt_scale_b},
    };
}

void DecoderParams::save(const std::string& path) const {
    Checkpoint c;
    for (auto& [name, t] : const_cast<DecoderParams*>(this)->named_tensors()) c.put(name, t);
    save_checkpoint(c, path);
}

DecoderParams DecoderParams::load(const std::string& path) {
    Checkpoint c = load_checkpoint(path);
    Rng rng(0);
    DecoderParams p = DecoderParams::init(rng);
    for (auto& [name, t] : p.named_tensors()) {
        Tensor stored = c.get(name);
        LAVT_CHECK(stored.shape() == t.shape(), "decoder checkpoint: '%s' has shape %s",
                   name.c_str(), shape_str(stored.shape()).c_str());
        t.vec() = stored.vec();
    }
    return p;
}

AttributeMaps decode(const Tensor& plane, DecoderParams& params, bool training) {
    check_plane_shape(plane);

    std::vector<Tensor> layer_list;
    for (int l = 0; l < kNumLayers; ++l)
        layer_list.push_back(reshape(slice(plane, 2, int64_t(l) * kPlaneRes, kPlaneRes),
                                     {1, kPlaneChannels, kPlaneRes, kPlaneRes}));
    Tensor stack = tanh_op(concat(layer_list, 0));  // (3,12,H,W) in (-1,1)

    Tensor xg = slice(stack, 1, 0, 6);
    Tensor xt = slice(stack, 1, 6, 6);

    Tensor hg = silu(batch_norm2d(conv2d(xg, params.dg_conv_w, params.dg_conv_b), params.dg_bn,
                                  training));
    Tensor off = conv2d(hg, params.dg_offset_w, params.dg_offset_b);
    Tensor opa = sigmoid(conv2d(hg, params.dg_opacity_w, params.dg_opacity_b));

    Tensor ht = silu(batch_norm2d(conv2d(xt, params.dt_conv_w, params.dt_conv_b), params.dt_bn,
                                  training));
    Tensor col = sigmoid(conv2d(ht, params.dt_color_w, params.dt_color_b));
    Tensor rot = sigmoid(conv2d(ht, params.dt_rot_w, params.dt_rot_b));
    Tensor scl = sigmoid(conv2d(ht, params.dt_scale_w, params.dt_scale_b));

    AttributeMaps maps;
    auto per_layer = [&](const Tensor& t, int l, int64_t ch) {
        return reshape(slice(t, 0, l, 1), {ch, kPlaneRes, kPlaneRes});
    };
    for (int l = 0; l < kNumLayers; ++l) {
        maps.offset[l] = per_layer(off, l, 3);
        maps.opacity[l] = per_layer(opa, l, 1);
        maps.color[l] = per_layer(col, l, 3);
        maps.rot[l] = per_layer(rot, l, 3);
        maps.scale[l] = per_layer(scl, l, 3);
    }
    return maps;
}

Tensor compose_rotation(const Tensor& dr, const std::vector<Mat3>& r0) {
    LAVT_CHECK(dr.rank() == 2 && dr.dim(1) == 3, "compose_rotation: dr must be (N,3)");
    int64_t n = dr.dim(0);
    LAVT_CHECK(int64_t(r0.size()) == n, "compose_rotation: %lld seeds, %zu base rotations",
               (long long)n, r0.size());
    const float kHalfPi = 1.57079632679489661923f;

    Tensor out = Tensor::zeros({n, 9});
    const float* pd = dr.data();
    float* po = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        Vec3 axis{(pd[i * 3] - 0.5f) * kHalfPi, (pd[i * 3 + 1] - 0.5f) * kHalfPi,
                  (pd[i * 3 + 2] - 0.5f) * kHalfPi};
        Mat3 r = r0[i] * rodrigues(axis);
        for (int k = 0; k < 9; ++k) po[i * 9 + k] = r.m[k];
    }

    if (tape_active_for({&dr})) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        auto di = dr.impl(), oi = out.impl();
        std::vector<Mat3> r0_copy = r0;
        tape->record([di, oi, r0_copy, n, kHalfPi]() {
            if (oi->grad.empty() || !di->requires_grad) return;
            if (di->grad.empty()) di->grad.assign(di->data.size(), 0.f);
            const float* pd = di->data.data();
            const float* go = oi->grad.data();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < n; ++i) {
                Vec3 axis{(pd[i * 3] - 0.5f) * kHalfPi, (pd[i * 3 + 1] - 0.5f) * kHalfPi,
                          (pd[i * 3 + 2] - 0.5f) * kHalfPi};
                auto jac = rodrigues_jacobian(axis);
                for (int a = 0; a < 3; ++a) {
                    Mat3 dr_da = r0_copy[i] * jac[a];
                    float acc = 0.f;
                    for (int k = 0; k < 9; ++k) acc += go[i * 9 + k] * dr_da.m[k];
                    di->grad[i * 3 + a] += acc * kHalfPi;
                }
            }
        });
    }
    return out;
}

namespace {

TapeGaussians extract_component(const AttributeMaps& maps, const SeedSet& seeds, Label label,
                                const ExtractConfig& cfg, Tensor* raw_offsets) {
    auto [lo, hi] = seeds.label_range[size_t(label)];
    int64_t n = hi - lo;
    TapeGaussians g;
    if (n == 0) {
        g.mu = Tensor::zeros({0, 3});
        g.rot = Tensor::zeros({0, 9});
        g.scale = Tensor::zeros({0, 3});
        g.alpha = Tensor::zeros({0});
        g.color = Tensor::zeros({0, 3});
        if (raw_offsets) *raw_offsets = Tensor::zeros({0, 3});
        return g;
    }
    int layer = label_layer(label);

    std::vector<float> uv(n * 2), mu0(n * 3), s0(n * 3);
    std::vector<Mat3> r0(n);
    for (int64_t i = 0; i < n; ++i) {
        const GaussianSeed& s = seeds.seeds[lo + i];
        uv[i * 2] = s.uv[0];
        uv[i * 2 + 1] = s.uv[1];
        for (int c = 0; c < 3; ++c) {
            mu0[i * 3 + c] = s.mu0[c];
            s0[i * 3 + c] = s.s0[c];
        }
        r0[i] = s.r0;
    }
    Tensor uv_t = Tensor::from_data({n, 2}, std::move(uv));
    Tensor mu0_t = Tensor::from_data({n, 3}, std::move(mu0));
    Tensor s0_t = Tensor::from_data({n, 3}, std::move(s0));

    Tensor off = bilinear_sample(maps.offset[layer], uv_t);   // (N,3)
    Tensor opa = bilinear_sample(maps.opacity[layer], uv_t);  // (N,1)
    Tensor col = bilinear_sample(maps.color[layer], uv_t);    // (N,3)
    Tensor drot = bilinear_sample(maps.rot[layer], uv_t);     // (N,3)
    Tensor dscl = bilinear_sample(maps.scale[layer], uv_t);   // (N,3)

    if (raw_offsets) *raw_offsets = off;
    g.mu = add(mul(off, cfg.offset_radius), mu0_t);
    g.alpha = reshape(opa, {n});
    g.color = col;
    g.scale = mul(mul(dscl, 2.f), s0_t);
    g.rot = compose_rotation(drot, r0);
    g.label.assign(size_t(n), uint8_t(label));
    return g;
}

}  // namespace

ExtractedAvatar extract_attributes(const AttributeMaps& maps, const SeedSet& seeds,
                                   const ExtractConfig& cfg) {
    ExtractedAvatar out;
    std::vector<TapeGaussians> parts;
    for (int i = 0; i < kNumLabels; ++i) {
        out.components[i] = extract_component(maps, seeds, Label(i), cfg, &out.raw_offsets[i]);
        if (out.components[i].size() > 0) parts.push_back(out.components[i]);
    }
    LAVT_CHECK(!parts.empty(), "extract_attributes: empty seed set");
    out.all = concat_gaussians(parts);
    return out;
}

GaussianBatch extract_gaussians(const AttributeMaps& maps, const SeedSet& seeds,
                                const ExtractConfig& cfg) {
    ExtractedAvatar a = extract_attributes(maps, seeds, cfg);
    return a.all.to_batch();
}

}  // namespace lavt
