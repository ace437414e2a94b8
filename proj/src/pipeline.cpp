#include "lavt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lavt/checkpoint.hpp"

namespace lavt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json config_to_json(const FitConfig& c) {
    json j;
    j["iterations"] = c.iterations;
    j["scenes_per_iter"] = c.scenes_per_iter;
    j["views_per_scene"] = c.views_per_scene;
    j["lr_plane"] = c.lr_plane;
    j["lr_decoder"] = c.lr_decoder;
    j["lr_denoiser"] = c.lr_denoiser;
    j["huber_delta"] = c.huber_delta;
    j["offset_radius"] = c.offset_radius;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["bn_warmup"] = c.bn_warmup;
    j["enable_diffusion"] = c.enable_diffusion;
    j["symmetric_head_init"] = c.symmetric_head_init;
    j["subdiv_levels"] = c.subdiv_levels;
    j["save_every"] = c.save_every;
    j["early_stop_color_fraction"] = c.early_stop_color_fraction;
    j["weights"] = {{"color", c.weights.color},   {"mask", c.weights.mask},
                    {"per", c.weights.per},       {"seg", c.weights.seg},
                    {"maskin", c.weights.maskin}, {"skin", c.weights.skin},
                    {"offset", c.weights.offset}, {"smooth", c.weights.smooth}};
    return j;
}

void config_from_json(FitConfig& c, const json& j) {
    c.iterations = j.value("iterations", c.iterations);
    c.scenes_per_iter = j.value("scenes_per_iter", c.scenes_per_iter);
    c.views_per_scene = j.value("views_per_scene", c.views_per_scene);
    c.lr_plane = j.value("lr_plane", c.lr_plane);
    c.lr_decoder = j.value("lr_decoder", c.lr_decoder);
    c.lr_denoiser = j.value("lr_denoiser", c.lr_denoiser);
    c.huber_delta = j.value("huber_delta", c.huber_delta);
    c.offset_radius = j.value("offset_radius", c.offset_radius);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.bn_warmup = j.value("bn_warmup", c.bn_warmup);
    c.enable_diffusion = j.value("enable_diffusion", c.enable_diffusion);
    c.symmetric_head_init = j.value("symmetric_head_init", c.symmetric_head_init);
    c.subdiv_levels = j.value("subdiv_levels", c.subdiv_levels);
    c.save_every = j.value("save_every", c.save_every);
    c.early_stop_color_fraction =
        j.value("early_stop_color_fraction", c.early_stop_color_fraction);
    if (j.contains("weights")) {
        const json& w = j["weights"];
        c.weights.color = w.value("color", c.weights.color);
        c.weights.mask = w.value("mask", c.weights.mask);
        c.weights.per = w.value("per", c.weights.per);
        c.weights.seg = w.value("seg", c.weights.seg);
        c.weights.maskin = w.value("maskin", c.weights.maskin);
        c.weights.skin = w.value("skin", c.weights.skin);
        c.weights.offset = w.value("offset", c.weights.offset);
        c.weights.smooth = w.value("smooth", c.weights.smooth);
    }
}

}  // namespace

FitConfig FitConfig::from_json_file(const std::string& path) {
    std::ifstream f(path);
    LAVT_CHECK(f.good(), "config: cannot read '%s'", path.c_str());
    FitConfig c;
    config_from_json(c, json::parse(f));
    return c;
}

void FitConfig::to_json_file(const std::string& path) const {
    std::ofstream f(path);
    LAVT_CHECK(f.good(), "config: cannot write '%s'", path.c_str());
    f << config_to_json(*this).dump(2) << "\n";
}

void FitConfig::apply_json(const std::string& text) {
    config_from_json(*this, json::parse(text));
}

Dataset load_dataset(const std::vector<std::string>& manifest_paths, int subdiv_levels) {
    LAVT_CHECK(!manifest_paths.empty(), "load_dataset: no manifests");
    Dataset d;
    for (const std::string& path : manifest_paths) d.scenes.push_back(load_scene(path));

    const SceneManifest& first = d.scenes[0].manifest;
    std::string model_path = (fs::path(d.scenes[0].dir) / first.model_path).string();
    d.model = load_body_model(model_path);
    d.atlas = default_atlas(d.model);
    subdivide(d.atlas, subdiv_levels);
    d.seeds = init_seeds(d.atlas);
    bake_offsets(d.seeds, d.atlas.model);
    SkinningField field = build_skinning_field(d.atlas.model);
    assign_weights(d.seeds, d.atlas.model, field);

    for (const SceneTruth& scene : d.scenes) {
        const BodyParams& p = scene.manifest.params;
        LAVT_CHECK(int64_t(p.beta.size()) == d.model.n_shape,
                   "load_dataset: scene '%s' has %zu shape coefficients, model has %lld",
                   scene.manifest.subject.c_str(), p.beta.size(), (long long)d.model.n_shape);
        d.warp.push_back(warp_offsets(d.seeds, d.atlas.model, p));
        auto tf = rigid_transforms(d.atlas.model, p.beta, p.theta);
        d.deform.push_back(build_deform_context(d.seeds, tf));
    }

    // hand seeds form a contiguous span inside the body range (face-major)
    auto [blo, bhi] = d.seeds.label_range[size_t(Label::body)];
    int64_t hfirst = -1, hlast = -1;
    for (int64_t i = blo; i < bhi; ++i) {
        Region r = Region(d.atlas.model.vertex_region[d.atlas.model.faces[d.seeds.seeds[i].face * 3]]);
        if (r == Region::hand_l || r == Region::hand_r) {
            if (hfirst < 0) hfirst = i;
            hlast = i;
        }
    }
    LAVT_CHECK(hfirst >= 0, "load_dataset: model has no hand-region faces");
    for (size_t s = 0; s < d.scenes.size(); ++s) {
        d.hand_seed_first.push_back(hfirst);
        d.hand_seed_count.push_back(hlast - hfirst + 1);
    }
    return d;
}

namespace {

GaussianBatch hand_subset(const GaussianBatch& posed_body, int64_t body_first,
                          int64_t hand_first, int64_t hand_count) {
    GaussianBatch out;
    int64_t off = hand_first - body_first;
    for (int64_t i = off; i < off + hand_count; ++i) {
        out.mu.insert(out.mu.end(), posed_body.mu.begin() + i * 3,
                      posed_body.mu.begin() + i * 3 + 3);
        out.rot.insert(out.rot.end(), posed_body.rot.begin() + i * 9,
                       posed_body.rot.begin() + i * 9 + 9);
        out.scale.insert(out.scale.end(), posed_body.scale.begin() + i * 3,
                         posed_body.scale.begin() + i * 3 + 3);
        out.alpha.push_back(posed_body.alpha[i]);
        out.color.insert(out.color.end(), posed_body.color.begin() + i * 3,
                         posed_body.color.begin() + i * 3 + 3);
        out.label.push_back(posed_body.label[i]);
    }
    return out;
}

struct SceneState {
    Tensor plane;
    AdamState adam;
};

}  // namespace

FitResult fit(Dataset& data, const FitConfig& cfg, const std::string& run_dir) {
    LAVT_CHECK(cfg.iterations >= 1 && cfg.scenes_per_iter >= 1 && cfg.views_per_scene >= 1,
               "fit: budgets must be positive");
    LAVT_CHECK(cfg.lr_plane > 0.f && cfg.lr_decoder > 0.f && cfg.lr_denoiser > 0.f,
               "fit: learning rates must be positive");
    cfg.weights.validate();
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);

    fs::create_directories(run_dir);
    fs::create_directories(fs::path(run_dir) / "checkpoints");
    fs::create_directories(fs::path(run_dir) / "samples");
    cfg.to_json_file((fs::path(run_dir) / "config.json").string());
    save_body_model(data.atlas.model, (fs::path(run_dir) / "model.ckpt").string());
    save_template_bundle(data.atlas, (fs::path(run_dir) / "template").string());

    Rng rng(cfg.seed);
    Rng init_rng = rng.fork(1);
    DecoderParams decoders = DecoderParams::init(init_rng, cfg.symmetric_head_init);
    decoders.mark_trainable();
    Rng den_rng = rng.fork(2);
    ToyDenoiser denoiser(den_rng);
    denoiser.mark_trainable();
    Schedule schedule = Schedule::linear();

    const size_t n_scenes = data.scenes.size();
    std::vector<SceneState> scenes(n_scenes);
    for (auto& s : scenes) {
        s.plane = empty_plane();
        s.plane.set_requires_grad(true);
    }
    std::vector<Tensor> dec_params = decoders.trainable();
    std::vector<AdamState> dec_adam(dec_params.size());
    std::vector<Tensor> den_params = denoiser.parameters();
    std::vector<AdamState> den_adam(den_params.size());

    std::ofstream log((fs::path(run_dir) / "losses.jsonl").string());
    LAVT_CHECK(log.good(), "fit: cannot write the loss log");

    ExtractConfig extract_cfg{cfg.offset_radius};
    auto [body_lo, body_hi] = data.seeds.label_range[size_t(Label::body)];

    auto save_state = [&](int iter) {
        std::string dir = (fs::path(run_dir) / "checkpoints" / strf("iter_%d", iter)).string();
        fs::create_directories(dir);
        decoders.save((fs::path(dir) / "decoders.ckpt").string());
        denoiser.save((fs::path(dir) / "denoiser.ckpt").string());
        for (size_t s = 0; s < n_scenes; ++s) {
            AvatarCheckpoint av;
            av.plane = scenes[s].plane;
            av.beta = data.scenes[s].manifest.params.beta;
            av.psi = data.scenes[s].manifest.params.psi;
            av.save((fs::path(dir) /
                     strf("avatar_%s.ckpt", data.scenes[s].manifest.subject.c_str()))
                        .string());
        }
    };

    FitResult result;
    result.run_dir = run_dir;
    int consecutive_failures = 0;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        // sample scenes and views without replacement
        std::vector<size_t> scene_ids(n_scenes);
        for (size_t i = 0; i < n_scenes; ++i) scene_ids[i] = i;
        for (size_t i = 0; i < n_scenes; ++i)
            std::swap(scene_ids[i], scene_ids[i + size_t(rng.uniform_int(n_scenes - i))]);
        scene_ids.resize(std::min<size_t>(cfg.scenes_per_iter, n_scenes));

        bool bn_training = iter < cfg.bn_warmup;
        std::vector<float> bn_snapshot;
        if (bn_training)
            for (const Tensor& t : {decoders.dg_bn.running_mean, decoders.dg_bn.running_var,
                                    decoders.dt_bn.running_mean, decoders.dt_bn.running_var})
                bn_snapshot.insert(bn_snapshot.end(), t.vec().begin(), t.vec().end());

        Tape tape;
        Tensor total;
        LossBreakdown breakdown;
        double agg_color = 0, agg_mask = 0, agg_seg = 0, agg_per = 0, agg_maskin = 0,
               agg_skin = 0, agg_offset = 0, agg_smooth = 0, agg_diff = 0;

        for (size_t sid : scene_ids) {
            SceneTruth& scene = data.scenes[sid];
            AttributeMaps maps = decode(scenes[sid].plane, decoders, bn_training);
            ExtractedAvatar av = extract_attributes(maps, data.seeds, extract_cfg);

            std::vector<TapeGaussians> posed(kNumLabels);
            for (int i = 0; i < kNumLabels; ++i) {
                int64_t first = data.seeds.label_range[i].first;
                TapeGaussians w = warp_shape(av.components[i], data.warp[sid], first);
                posed[i] = pose_transform(w, data.deform[sid], first);
            }
            TapeGaussians all = concat_gaussians(posed);

            Tensor scene_loss;
            LossBreakdown reg_bd;
            scene_loss = reg_loss(maps, av.raw_offsets, cfg.weights.offset,
                                  cfg.weights.smooth, &reg_bd);
            agg_offset += reg_bd.get("offset");
            agg_smooth += reg_bd.get("smooth");

            const size_t n_views = scene.views.size();
            std::vector<size_t> view_ids(n_views);
            for (size_t i = 0; i < n_views; ++i) view_ids[i] = i;
            for (size_t i = 0; i < n_views; ++i)
                std::swap(view_ids[i], view_ids[i + size_t(rng.uniform_int(n_views - i))]);
            view_ids.resize(std::min<size_t>(cfg.views_per_scene, n_views));

            for (size_t vid : view_ids) {
                const ViewTruth& truth = scene.views[vid];
                const Camera& cam = truth.camera;

                RenderSet rs;
                RenderImages full =
                    render_op(all, cam, scene.manifest.background, RenderMode::color);
                rs.full_rgb = full.color;
                rs.full_alpha = full.alpha;
                for (int i = 0; i < kNumLabels; ++i) {
                    RenderImages comp = render_op(posed[i], cam, scene.manifest.background,
                                                  RenderMode::color);
                    rs.comp_rgb[i] = comp.color;
                    rs.comp_alpha[i] = comp.alpha;
                }
                RenderImages seg = render_op(all, cam, {0, 0, 0}, RenderMode::segmentation);
                rs.seg = seg.labels;
                RenderImages det = render_op(posed[size_t(Label::body)], cam, {0, 0, 0},
                                             RenderMode::silhouette_detached_full_opacity);
                rs.body_sil_detached = det.alpha;

                LossBreakdown vb;
                Tensor vloss =
                    recon_loss(rs, truth, cfg.weights, cfg.huber_delta, nullptr, &vb);
                vloss = add(vloss, maskin_loss(rs.body_sil_detached, truth.fg_mask,
                                               cfg.weights.maskin, &vb));

                // skin prior: current hand silhouette picks the target color
                GaussianBatch body_plain = posed[size_t(Label::body)].to_batch();
                GaussianBatch hands = hand_subset(body_plain, body_lo,
                                                  data.hand_seed_first[sid],
                                                  data.hand_seed_count[sid]);
                RenderOutput hand_sil =
                    render(hands, cam, {0, 0, 0}, RenderMode::silhouette);
                Vec3 c_skin =
                    skin_color_estimate(hand_sil.alpha, truth.rgb, kSkinFallback);
                Tensor oc = occlusion_mask(truth);
                vloss = add(vloss, skin_loss(rs.comp_rgb[size_t(Label::body)], oc, c_skin,
                                             cfg.weights.skin, cfg.huber_delta, &vb));

                agg_color += vb.get("color");
                agg_mask += vb.get("mask");
                agg_seg += vb.get("seg");
                agg_per += vb.get("per");
                agg_maskin += vb.get("maskin");
                agg_skin += vb.get("skin");
                scene_loss = add(scene_loss, vloss);
            }

            if (cfg.enable_diffusion) {
                float t = rng.uniform();
                Rng eps_rng = rng.fork(uint64_t(iter) * 977 + sid);
                Tensor eps = Tensor::randn(scenes[sid].plane.shape(), eps_rng);
                Tensor dl = diffusion_loss(scenes[sid].plane, denoiser, t, eps, schedule);
                agg_diff += dl.item();
                scene_loss = add(scene_loss, dl);
            }
            total = total.defined() ? add(total, scene_loss) : scene_loss;
        }
        total = mul(total, 1.f / float(scene_ids.size()));

        float total_value = total.item();
        if (!std::isfinite(total_value)) {
            if (bn_training) {
                size_t off = 0;
                for (Tensor t : {decoders.dg_bn.running_mean, decoders.dg_bn.running_var,
                                 decoders.dt_bn.running_mean, decoders.dt_bn.running_var}) {
                    std::copy(bn_snapshot.begin() + off,
                              bn_snapshot.begin() + off + t.numel(), t.data());
                    off += t.numel();
                }
            }
            ++consecutive_failures;
            ++result.aborted_nonfinite;
            std::fprintf(stderr, "fit: non-finite loss at iteration %d, skipping\n", iter);
            log << strf("{\"iter\":%d,\"skipped\":true}", iter) << "\n";
            LAVT_CHECK(consecutive_failures < 3, "fit: 3 consecutive non-finite iterations");
            continue;
        }
        consecutive_failures = 0;

        tape.backward(total);

        AdamConfig plane_cfg{cfg.lr_plane, 0.9f, 0.999f, 1e-8f};
        AdamConfig dec_cfg{cfg.lr_decoder, 0.9f, 0.999f, 1e-8f};
        AdamConfig den_cfg{cfg.lr_denoiser, 0.9f, 0.999f, 1e-8f};
        for (size_t sid : scene_ids) adam_step(scenes[sid].plane, scenes[sid].adam, plane_cfg);
        for (size_t i = 0; i < dec_params.size(); ++i)
            adam_step(dec_params[i], dec_adam[i], dec_cfg);
        if (cfg.enable_diffusion)
            for (size_t i = 0; i < den_params.size(); ++i)
                adam_step(den_params[i], den_adam[i], den_cfg);
        // clear any remaining gradients (e.g. planes outside this batch)
        for (auto& s : scenes) s.plane.zero_grad();

        double denom = double(scene_ids.size());
        float color_mean = float(agg_color / denom);
        log << strf("{\"iter\":%d,\"total\":%.6g,\"color\":%.6g,\"mask\":%.6g,\"seg\":%.6g,"
                    "\"per\":%.6g,\"maskin\":%.6g,\"skin\":%.6g,\"offset\":%.6g,"
                    "\"smooth\":%.6g,\"diffusion\":%.6g}",
                    iter, total_value, color_mean, agg_mask / denom, agg_seg / denom,
                    agg_per / denom, agg_maskin / denom, agg_skin / denom, agg_offset / denom,
                    agg_smooth / denom, agg_diff / denom)
            << "\n";
        log.flush();

        if (iter == 0) result.first_color_loss = color_mean;
        result.last_color_loss = color_mean;
        result.last_total = total_value;
        result.iterations_run = iter + 1;

        if (cfg.save_every > 0 && (iter + 1) % cfg.save_every == 0) save_state(iter + 1);
        if (cfg.early_stop_color_fraction > 0.f && iter > 0 &&
            color_mean <= cfg.early_stop_color_fraction * result.first_color_loss)
            break;
    }

    save_state(result.iterations_run);
    // the latest checkpoint is duplicated under a stable name
    std::string latest = (fs::path(run_dir) / "checkpoints" / "latest").string();
    fs::remove_all(latest);
    fs::create_directories(latest);
    std::string src =
        (fs::path(run_dir) / "checkpoints" / strf("iter_%d", result.iterations_run)).string();
    for (const auto& e : fs::directory_iterator(src))
        fs::copy_file(e.path(), fs::path(latest) / e.path().filename());
    return result;
}

void AvatarCheckpoint::save(const std::string& path) const {
    Checkpoint c;
    c.put("plane", plane);
    c.put("beta", Tensor::from_data({int64_t(beta.size())}, beta));
    c.put("psi", Tensor::from_data({int64_t(psi.size())}, psi));
    save_checkpoint(c, path);
}

AvatarCheckpoint AvatarCheckpoint::load(const std::string& path) {
    Checkpoint c = load_checkpoint(path);
    AvatarCheckpoint av;
    av.plane = c.get("plane");
    check_plane_shape(av.plane);
    av.beta = c.get("beta").vec();
    av.psi = c.get("psi").vec();
    return av;
}

void transfer_component(AvatarCheckpoint& target, const AvatarCheckpoint& source, Label label,
                        const TemplateAtlas& atlas) {
    check_plane_shape(target.plane);
    check_plane_shape(source.plane);
    const ComponentTemplate& tpl = atlas.templates[size_t(label)];
    int layer = tpl.layer;
    // texel rectangle of this component's UV islands, expanded by one texel
    // so every bilinear read of its seeds is covered
    int x0 = std::max(0, int(std::floor(tpl.uv_box[0] * (kPlaneRes - 1))) - 1);
    int y0 = std::max(0, int(std::floor(tpl.uv_box[1] * (kPlaneRes - 1))) - 1);
    int x1 = std::min(kPlaneRes - 1, int(std::ceil(tpl.uv_box[2] * (kPlaneRes - 1))) + 1);
    int y1 = std::min(kPlaneRes - 1, int(std::ceil(tpl.uv_box[3] * (kPlaneRes - 1))) + 1);

    const int w = kPlaneRes * kNumLayers;
    for (int c = 0; c < kPlaneChannels; ++c)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                int64_t idx = (int64_t(c) * kPlaneRes + y) * w + layer * kPlaneRes + x;
                target.plane.data()[idx] = source.plane.data()[idx];
            }
}

GaussianBatch avatar_batch(const AvatarCheckpoint& avatar, DecoderParams& decoders,
                           const Dataset& data, const BodyParams& params,
                           float offset_radius) {
    AttributeMaps maps = decode(avatar.plane, decoders, false);
    GaussianBatch batch = extract_gaussians(maps, data.seeds, {offset_radius});
    warp_shape_inplace(batch, data.seeds, data.atlas.model, params);
    auto tf = rigid_transforms(data.atlas.model, params.beta, params.theta);
    DeformContext ctx = build_deform_context(data.seeds, tf);
    pose_transform_inplace(batch, ctx);
    return batch;
}

std::vector<Tensor> animate(const AvatarCheckpoint& avatar, DecoderParams& decoders,
                            const Dataset& data, const std::vector<BodyParams>& frames,
                            const Camera& camera, const Vec3& background,
                            float offset_radius) {
    AttributeMaps maps = decode(avatar.plane, decoders, false);
    GaussianBatch canonical = extract_gaussians(maps, data.seeds, {offset_radius});
    std::vector<Tensor> out;
    for (const BodyParams& p : frames) {
        GaussianBatch batch = canonical;
        warp_shape_inplace(batch, data.seeds, data.atlas.model, p);
        auto tf = rigid_transforms(data.atlas.model, p.beta, p.theta);
        DeformContext ctx = build_deform_context(data.seeds, tf);
        pose_transform_inplace(batch, ctx);
        out.push_back(render(batch, camera, background, RenderMode::color).color);
    }
    return out;
}

std::vector<BodyParams> load_pose_sequence(const std::string& path, const BodyModel& model) {
    std::ifstream f(path);
    LAVT_CHECK(f.good(), "pose sequence: cannot read '%s'", path.c_str());
    json j = json::parse(f);
    LAVT_CHECK(j.is_array(), "pose sequence: expected a JSON array of frames");
    std::vector<BodyParams> frames;
    for (const auto& jf : j) {
        BodyParams p = BodyParams::rest(model);
        if (jf.contains("theta")) p.theta = jf["theta"].get<std::vector<float>>();
        if (jf.contains("beta")) p.beta = jf["beta"].get<std::vector<float>>();
        if (jf.contains("psi")) p.psi = jf["psi"].get<std::vector<float>>();
        LAVT_CHECK(int64_t(p.theta.size()) == model.n_joints * 3,
                   "pose sequence: frame has %zu rotation values, expected %lld",
                   p.theta.size(), (long long)(model.n_joints * 3));
        frames.push_back(std::move(p));
    }
    return frames;
}

}  // namespace lavt
