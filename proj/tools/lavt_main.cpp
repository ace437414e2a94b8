#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "lavt/checkpoint.hpp"
#include "lavt/oracle_checks.hpp"
#include "lavt/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lavt;

namespace {

std::string resolve_manifest(const std::string& data) {
    if (fs::is_directory(data)) return (fs::path(data) / "manifest.json").string();
    return data;
}

struct RunArtifacts {
    Dataset data;
    DecoderParams decoders;
    FitConfig config;
    std::string ckpt_dir;
};

RunArtifacts load_run(const std::string& run_dir, const std::string& iter,
                      const std::string& data_path) {
    RunArtifacts r;
    r.config = FitConfig::from_json_file((fs::path(run_dir) / "config.json").string());
    r.ckpt_dir = (fs::path(run_dir) / "checkpoints" / iter).string();
    LAVT_CHECK(fs::exists(r.ckpt_dir), "run: no checkpoint directory '%s'",
               r.ckpt_dir.c_str());
    LAVT_CHECK(!data_path.empty(),
               "this command needs --data pointing at the scene manifest used for fitting");
    r.data = load_dataset({resolve_manifest(data_path)}, r.config.subdiv_levels);
    r.decoders = DecoderParams::load((fs::path(r.ckpt_dir) / "decoders.ckpt").string());
    return r;
}

std::string avatar_path(const RunArtifacts& r, const std::string& subject) {
    std::string name = subject;
    if (name.empty()) {
        // single-subject runs pick the only avatar checkpoint
        for (const auto& e : fs::directory_iterator(r.ckpt_dir)) {
            std::string f = e.path().filename().string();
            if (f.rfind("avatar_", 0) == 0) return e.path().string();
        }
        fail("run: no avatar checkpoints found");
    }
    return (fs::path(r.ckpt_dir) / ("avatar_" + name + ".ckpt")).string();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"layered UV gaussian avatar engine"};
    app.require_subcommand(1);

    uint64_t seed = 0;
    int threads = 0;
    app.add_option("--seed", seed, "master random seed")->capture_default_str();
    app.add_option("--threads", threads, "OpenMP thread count (0 = default)")
        ->capture_default_str();

    // --- make-toy-scene ---
    auto* mk = app.add_subcommand("make-toy-scene", "generate the synthetic dataset");
    ToySceneConfig toy;
    std::string mk_out;
    mk->add_option("--out", mk_out, "output directory")->required();
    mk->add_option("--views", toy.views, "training view count")->capture_default_str();
    mk->add_option("--size", toy.size, "image size")->capture_default_str();
    mk->add_option("--subdiv", toy.subdiv_levels, "template subdivision levels")
        ->capture_default_str();
    mk->add_option("--mask-noise", toy.mask_noise_rate, "salt-noise rate on masks")
        ->capture_default_str();
    mk->add_option("--noisy-views", toy.noisy_views, "views receiving mask noise (max 2)")
        ->capture_default_str();

    // --- fit ---
    auto* ft = app.add_subcommand("fit", "single-stage joint fitting and diffusion training");
    std::vector<std::string> fit_data;
    std::string fit_out, fit_config, fit_set;
    int fit_iters = -1;
    ft->add_option("--data", fit_data, "scene manifests or dataset directories")->required();
    ft->add_option("--out", fit_out, "run directory")->required();
    ft->add_option("--iters", fit_iters, "iteration budget");
    ft->add_option("--config", fit_config, "JSON config file overriding defaults");
    ft->add_option("--set", fit_set, "inline JSON overrides, e.g. '{\"lr_plane\":0.02}'");

    // --- render ---
    auto* rd = app.add_subcommand("render", "render a fitted avatar");
    std::string rd_run, rd_iter = "latest", rd_subject, rd_data, rd_out, rd_component;
    int rd_view = -1;
    bool rd_holdout = false;
    rd->add_option("--run", rd_run, "run directory")->required();
    rd->add_option("--iter", rd_iter, "checkpoint (iter_N or latest)")->capture_default_str();
    rd->add_option("--subject", rd_subject, "subject id (default: the only one)");
    rd->add_option("--data", rd_data, "dataset manifest (for cameras and the model)");
    rd->add_option("--view", rd_view, "camera index from the manifest");
    rd->add_flag("--holdout", rd_holdout, "use the manifest's holdout camera");
    rd->add_option("--component", rd_component, "render only one component label");
    rd->add_option("--out", rd_out, "output PNG")->required();

    // --- animate ---
    auto* an = app.add_subcommand("animate", "render a pose sequence");
    std::string an_run, an_iter = "latest", an_subject, an_data, an_poses, an_out;
    int an_view = 0;
    an->add_option("--run", an_run)->required();
    an->add_option("--iter", an_iter)->capture_default_str();
    an->add_option("--subject", an_subject);
    an->add_option("--data", an_data)->required();
    an->add_option("--poses", an_poses, "JSON array of {theta,beta,psi} frames")->required();
    an->add_option("--view", an_view, "camera index")->capture_default_str();
    an->add_option("--out", an_out, "output directory")->required();

    // --- transfer ---
    auto* tr = app.add_subcommand("transfer", "transfer a component between avatars");
    std::string tr_target, tr_source, tr_label, tr_out, tr_model, tr_template;
    tr->add_option("--target", tr_target, "target avatar checkpoint")->required();
    tr->add_option("--source", tr_source, "source avatar checkpoint")->required();
    tr->add_option("--label", tr_label, "component label")->required();
    tr->add_option("--out", tr_out, "output avatar checkpoint")->required();
    tr->add_option("--model", tr_model, "body model checkpoint")->required();
    tr->add_option("--template", tr_template, "template bundle prefix")->required();

    // --- sample ---
    auto* sp = app.add_subcommand("sample", "draw a plane from the diffusion model");
    std::string sp_denoiser, sp_out;
    int sp_steps = 100;
    sp->add_option("--denoiser", sp_denoiser, "denoiser checkpoint")->required();
    sp->add_option("--steps", sp_steps, "sampling steps")->capture_default_str();
    sp->add_option("--out", sp_out, "output plane checkpoint")->required();

    // --- export-ply ---
    auto* ex = app.add_subcommand("export-ply", "export gaussians for external viewers");
    std::string ex_run, ex_iter = "latest", ex_subject, ex_data, ex_out;
    bool ex_canonical = false;
    ex->add_option("--run", ex_run)->required();
    ex->add_option("--iter", ex_iter)->capture_default_str();
    ex->add_option("--subject", ex_subject);
    ex->add_option("--data", ex_data)->required();
    ex->add_flag("--canonical", ex_canonical, "export the canonical pose");
    ex->add_option("--out", ex_out, "output PLY")->required();

    // --- check ---
    auto* ck = app.add_subcommand("check", "run the oracle suites");
    std::string ck_suite = "all";
    ck->add_option("--suite", ck_suite, "renderer | gradients | diffusion | all")
        ->capture_default_str();

    for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (threads > 0) omp_set_num_threads(threads);

        if (*mk) {
            toy.seed = seed == 0 ? toy.seed : seed;
            std::string manifest = make_toy_scene(toy, mk_out);
            std::printf("wrote %s\n", manifest.c_str());
        } else if (*ft) {
            FitConfig fit_cfg;
            if (!fit_config.empty()) fit_cfg = FitConfig::from_json_file(fit_config);
            if (!fit_set.empty()) fit_cfg.apply_json(fit_set);
            if (fit_iters > 0) fit_cfg.iterations = fit_iters;
            fit_cfg.seed = seed;
            fit_cfg.threads = threads;
            std::vector<std::string> manifests;
            for (const auto& d : fit_data) manifests.push_back(resolve_manifest(d));
            Dataset data = load_dataset(manifests, fit_cfg.subdiv_levels);
            FitResult res = fit(data, fit_cfg, fit_out);
            std::printf("fit: %d iterations, color %.4g -> %.4g, run dir %s\n",
                        res.iterations_run, res.first_color_loss, res.last_color_loss,
                        res.run_dir.c_str());
        } else if (*rd) {
            RunArtifacts run = load_run(rd_run, rd_iter, rd_data);
            AvatarCheckpoint avatar = AvatarCheckpoint::load(avatar_path(run, rd_subject));
            const SceneTruth& scene = run.data.scenes[0];
            Camera cam;
            if (rd_holdout) {
                LAVT_CHECK(scene.manifest.holdout.has_value(), "render: manifest has no holdout view");
                cam = scene.manifest.holdout->camera;
            } else {
                int v = rd_view < 0 ? 0 : rd_view;
                LAVT_CHECK(v < int(scene.manifest.views.size()),
                           "render: view %d out of range", v);
                cam = scene.manifest.views[v].camera;
            }
            BodyParams params = scene.manifest.params;
            params.beta = avatar.beta;
            params.psi = avatar.psi;
            GaussianBatch batch =
                avatar_batch(avatar, run.decoders, run.data, params, run.config.offset_radius);
            if (!rd_component.empty()) batch = batch.subset(label_from_name(rd_component));
            RenderOutput out =
                render(batch, cam, scene.manifest.background, RenderMode::color);
            save_png_rgb(rd_out, out.color);
            std::printf("wrote %s\n", rd_out.c_str());
        } else if (*an) {
            RunArtifacts run = load_run(an_run, an_iter, an_data);
            AvatarCheckpoint avatar = AvatarCheckpoint::load(avatar_path(run, an_subject));
            const SceneTruth& scene = run.data.scenes[0];
            LAVT_CHECK(an_view < int(scene.manifest.views.size()), "animate: bad view index");
            std::vector<BodyParams> frames =
                load_pose_sequence(an_poses, run.data.atlas.model);
            fs::create_directories(an_out);
            std::vector<Tensor> images =
                animate(avatar, run.decoders, run.data, frames,
                        scene.manifest.views[an_view].camera, scene.manifest.background,
                        run.config.offset_radius);
            for (size_t i = 0; i < images.size(); ++i)
                save_png_rgb((fs::path(an_out) / strf("frame_%04zu.png", i)).string(),
                             images[i]);
            std::printf("wrote %zu frames to %s\n", images.size(), an_out.c_str());
        } else if (*tr) {
            BodyModel model = load_body_model(tr_model);
            TemplateAtlas atlas = load_template_bundle(model, tr_template);
            AvatarCheckpoint target = AvatarCheckpoint::load(tr_target);
            AvatarCheckpoint source = AvatarCheckpoint::load(tr_source);
            transfer_component(target, source, label_from_name(tr_label), atlas);
            target.save(tr_out);
            std::printf("wrote %s\n", tr_out.c_str());
        } else if (*sp) {
            auto denoiser = ToyDenoiser::load(sp_denoiser);
            Schedule schedule = Schedule::linear();
            Rng rng(seed);
            Tensor plane = ddpm_sample(*denoiser, schedule, sp_steps, rng);
            Checkpoint c;
            c.put("plane", plane);
            save_checkpoint(c, sp_out);
            std::printf("wrote %s\n", sp_out.c_str());
        } else if (*ex) {
            RunArtifacts run = load_run(ex_run, ex_iter, ex_data);
            AvatarCheckpoint avatar = AvatarCheckpoint::load(avatar_path(run, ex_subject));
            BodyParams params = run.data.scenes[0].manifest.params;
            params.beta = avatar.beta;
            params.psi = avatar.psi;
            if (ex_canonical) params = BodyParams::rest(run.data.atlas.model);
            GaussianBatch batch =
                avatar_batch(avatar, run.decoders, run.data, params, run.config.offset_radius);
            export_ply(batch, ex_out);
            std::printf("wrote %s (%lld gaussians)\n", ex_out.c_str(),
                        (long long)batch.size());
        } else if (*ck) {
            bool all = ck_suite == "all";
            bool pass = true;
            auto report = [&](const char* name, const CheckResult& r) {
                std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", name, r.detail.c_str());
                pass = pass && r.pass;
            };
            if (all || ck_suite == "renderer")
                report("renderer oracle", check_renderer_oracle(5, 300, 64, seed + 1));
            if (all || ck_suite == "gradients")
                report("renderer gradients", check_renderer_gradients(1, 10, 16, seed + 2));
            if (all || ck_suite == "diffusion")
                report("diffusion algebra", check_diffusion_algebra(seed + 3));
            if (!all && ck_suite != "renderer" && ck_suite != "gradients" &&
                ck_suite != "diffusion")
                fail(strf("unknown check suite '%s'", ck_suite.c_str()));
            return pass ? 0 : 2;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
