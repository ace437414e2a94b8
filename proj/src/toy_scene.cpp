#include "lavt/toy_scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "lavt/renderer.hpp"

namespace lavt {

namespace {

Vec3 component_color(Label label, float u, float v) {
    switch (label) {
        case Label::body:
            // uniform skin so the hand-color prior matches everywhere
            return {0.87f, 0.72f, 0.60f};
        case Label::top:
            return {0.22f + 0.06f * std::sin(25.f * v), 0.34f, 0.72f};
        case Label::bottom:
            return {0.36f, 0.30f + 0.05f * std::sin(18.f * u), 0.27f};
        case Label::hair:
            return {0.33f + 0.05f * std::sin(30.f * u), 0.22f, 0.12f};
        case Label::shoes:
            return {0.16f, 0.15f, 0.18f + 0.04f * std::sin(20.f * v)};
    }
    return {0.5f, 0.5f, 0.5f};
}

constexpr float kToyAlpha = 0.95f;
constexpr float kToyScale = 1.3f;

}  // namespace

ToyAvatar build_toy_avatar(uint64_t seed, int subdiv_levels) {
    ToyAvatar a;
    a.model = make_toy_model(seed);
    a.atlas = default_atlas(a.model);
    subdivide(a.atlas, subdiv_levels);
    a.seeds = init_seeds(a.atlas);
    bake_offsets(a.seeds, a.atlas.model);
    SkinningField field = build_skinning_field(a.atlas.model);
    assign_weights(a.seeds, a.atlas.model, field);

    // mild non-rest parameters so the full deformation path is exercised
    a.params = BodyParams::rest(a.atlas.model);
    Rng rng(seed ^ 0x70cbafULL);
    a.params.beta[0] = 0.25f + 0.1f * rng.uniform();
    a.params.beta[2] = -0.2f;
    a.params.psi[0] = 0.4f;
    a.params.theta[18 * 3 + 1] = -0.25f;  // elbows bend slightly forward
    a.params.theta[19 * 3 + 1] = 0.25f;
    a.params.theta[4 * 3 + 0] = 0.12f;

    for (const GaussianSeed& s : a.seeds.seeds) {
        a.canonical.mu.insert(a.canonical.mu.end(), {s.mu0.x, s.mu0.y, s.mu0.z});
        a.canonical.rot.insert(a.canonical.rot.end(), s.r0.m.begin(), s.r0.m.end());
        a.canonical.scale.insert(a.canonical.scale.end(),
                                 {s.s0.x * kToyScale, s.s0.y * kToyScale, s.s0.z * kToyScale});
        a.canonical.alpha.push_back(kToyAlpha);
        Vec3 c = component_color(s.label, s.uv[0], s.uv[1]);
        a.canonical.color.insert(a.canonical.color.end(), {c.x, c.y, c.z});
        a.canonical.label.push_back(uint8_t(s.label));
    }

    a.posed = a.canonical;
    warp_shape_inplace(a.posed, a.seeds, a.atlas.model, a.params);
    auto tf = rigid_transforms(a.atlas.model, a.params.beta, a.params.theta);
    DeformContext ctx = build_deform_context(a.seeds, tf);
    pose_transform_inplace(a.posed, ctx);
    return a;
}

Camera toy_camera(int view, int views, int size) {
    float az = 6.28318530717958647692f * float(view) / float(views);
    return ring_camera(az, 0.f, 2.3f, {0.f, -0.05f, 0.f}, 1.1f * float(size), size);
}

Camera toy_holdout_camera(int views, int size) {
    float az = 6.28318530717958647692f * 0.5f / float(views);
    return ring_camera(az, 0.18f, 2.3f, {0.f, -0.05f, 0.f}, 1.1f * float(size), size);
}

namespace {

Tensor binarized(const Tensor& alpha) {
    Tensor out = alpha.clone();
    for (auto& v : out.vec()) v = v >= 0.5f ? 1.f : 0.f;
    return out;
}

}  // namespace

std::string make_toy_scene(const ToySceneConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    LAVT_CHECK(cfg.views >= 1, "make_toy_scene: need at least one view");
    LAVT_CHECK(cfg.noisy_views <= 2, "make_toy_scene: at most 2 noisy views");
    fs::create_directories(out_dir);

    ToyAvatar avatar = build_toy_avatar(cfg.seed, cfg.subdiv_levels);
    save_body_model(avatar.model, (fs::path(out_dir) / "model.ckpt").string());

    SceneManifest manifest;
    manifest.subject = strf("toy_%llu", (unsigned long long)cfg.seed);
    manifest.model_path = "model.ckpt";
    manifest.subdiv_levels = cfg.subdiv_levels;
    manifest.params = avatar.params;
    manifest.background = cfg.background;

    std::array<GaussianBatch, kNumLabels> comp_batches;
    for (int i = 0; i < kNumLabels; ++i) comp_batches[i] = avatar.posed.subset(Label(i));

    Rng noise_rng(cfg.seed ^ 0x5a17ULL);

    auto emit_view = [&](const Camera& cam, const std::string& stem, bool add_noise) {
        ViewEntry entry;
        entry.camera = cam;
        RenderOutput full = render(avatar.posed, cam, cfg.background, RenderMode::color);
        RenderOutput seg = render(avatar.posed, cam, {0, 0, 0}, RenderMode::segmentation);
        entry.rgb = stem + "_rgb.png";
        save_png_rgb((fs::path(out_dir) / entry.rgb).string(), full.color);
        Tensor fg = binarized(full.alpha);

        std::array<Tensor, kNumLabels> comp_mask;
        for (int i = 0; i < kNumLabels; ++i) {
            RenderOutput comp = render(comp_batches[i], cam, cfg.background, RenderMode::color);
            comp_mask[i] = binarized(comp.alpha);
            entry.comp_rgb[i] = strf("%s_rgb_%s.png", stem.c_str(), label_name(Label(i)));
            save_png_rgb((fs::path(out_dir) / entry.comp_rgb[i]).string(), comp.color);
        }

        // exact segmentation: the dominant class where the avatar is opaque.
        // Rim pixels can be opaque in union while no single silhouette
        // reaches 0.5; the dominant component is visibly present there, so
        // its mask is extended to keep masks and segmentation consistent.
        int h = cam.height, w = cam.width;
        Tensor seg_idx = Tensor::zeros({h, w});
        for (int64_t p = 0; p < int64_t(h) * w; ++p) {
            if (fg.data()[p] < 0.5f) continue;
            const float* m = seg.labels.data() + p * kNumLabels;
            int best = 0;
            for (int k = 1; k < kNumLabels; ++k)
                if (m[k] > m[best]) best = k;
            seg_idx.data()[p] = float(best + 1);
            if (comp_mask[best].data()[p] < 0.5f) comp_mask[best].data()[p] = 1.f;
        }

        if (add_noise && cfg.mask_noise_rate > 0.f) {
            for (int i = 0; i < kNumLabels; ++i)
                for (auto& v : comp_mask[i].vec())
                    if (noise_rng.uniform() < cfg.mask_noise_rate) v = 1.f;
            for (auto& v : fg.vec())
                if (noise_rng.uniform() < cfg.mask_noise_rate) v = 1.f;
        }

        entry.fg_mask = stem + "_mask.png";
        save_png_gray((fs::path(out_dir) / entry.fg_mask).string(), fg);
        entry.seg = stem + "_seg.png";
        save_png_index((fs::path(out_dir) / entry.seg).string(), seg_idx);
        for (int i = 0; i < kNumLabels; ++i) {
            entry.comp_mask[i] = strf("%s_mask_%s.png", stem.c_str(), label_name(Label(i)));
            save_png_gray((fs::path(out_dir) / entry.comp_mask[i]).string(), comp_mask[i]);
        }
        return entry;
    };

    for (int v = 0; v < cfg.views; ++v) {
        bool noisy = v < cfg.noisy_views;
        manifest.views.push_back(
            emit_view(toy_camera(v, cfg.views, cfg.size), strf("view%02d", v), noisy));
    }
    manifest.holdout = emit_view(toy_holdout_camera(cfg.views, cfg.size), "holdout", false);

    std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
    save_manifest(manifest, manifest_path);
    return manifest_path;
}

}  // namespace lavt
