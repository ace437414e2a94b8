#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lavt/adam.hpp"
#include "lavt/assets.hpp"
#include "lavt/deformation.hpp"
#include "lavt/diffusion.hpp"
#include "lavt/feature_plane.hpp"
#include "lavt/losses.hpp"
#include "lavt/toy_scene.hpp"

namespace lavt {

struct FitConfig {
    int iterations = 2000;
    int scenes_per_iter = 4;
    int views_per_scene = 2;
    float lr_plane = 0.04f;
    float lr_decoder = 1e-4f;
    float lr_denoiser = 1e-4f;
    LossWeights weights;
    float huber_delta = 0.1f;
    float offset_radius = 0.1f;
    uint64_t seed = 0;
    int threads = 0;  // 0 keeps the current OpenMP setting
    int bn_warmup = 200;
    bool enable_diffusion = true;
    bool symmetric_head_init = false;
    int subdiv_levels = 1;
    int save_every = 0;  // 0 saves the final state only
    // stop early once the color loss reaches this fraction of its first value
    // (0 disables)
    float early_stop_color_fraction = 0.f;

    static FitConfig from_json_file(const std::string& path);
    void to_json_file(const std::string& path) const;
    void apply_json(const std::string& json_text);
};

// Scenes sharing one body model and template atlas.
struct Dataset {
    BodyModel model;
    TemplateAtlas atlas;
    SeedSet seeds;
    std::vector<SceneTruth> scenes;
    // per scene, fixed during fitting
    std::vector<std::vector<float>> warp;     // N*3 canonical offsets
    std::vector<DeformContext> deform;        // blended joint transforms
    std::vector<int64_t> hand_seed_first;     // contiguous hand-seed span
    std::vector<int64_t> hand_seed_count;
};

Dataset load_dataset(const std::vector<std::string>& manifest_paths, int subdiv_levels);

struct FitResult {
    int iterations_run = 0;
    float first_color_loss = 0.f;
    float last_color_loss = 0.f;
    float last_total = 0.f;
    int aborted_nonfinite = 0;
    std::string run_dir;
};

// Single-stage joint optimization of per-subject planes, the shared decoders
// and the denoiser. Writes config.json, losses.jsonl, model/template bundles
// and checkpoints/iter_N/ under run_dir.
FitResult fit(Dataset& data, const FitConfig& cfg, const std::string& run_dir);

// Per-subject artifact: the layered plane plus its body-shape coefficients.
struct AvatarCheckpoint {
    Tensor plane;
    std::vector<float> beta, psi;
    void save(const std::string& path) const;
    static AvatarCheckpoint load(const std::string& path);
};

// Overwrites the target's UV island for `label` with the source's; the
// target keeps its own beta/psi so the component re-bakes to its shape.
void transfer_component(AvatarCheckpoint& target, const AvatarCheckpoint& source, Label label,
                        const TemplateAtlas& atlas);

// Decode once, then warp+pose+render each frame; opacity and color stay
// constant across frames.
std::vector<Tensor> animate(const AvatarCheckpoint& avatar, DecoderParams& decoders,
                            const Dataset& data, const std::vector<BodyParams>& frames,
                            const Camera& camera, const Vec3& background,
                            float offset_radius = 0.1f);

std::vector<BodyParams> load_pose_sequence(const std::string& path, const BodyModel& model);

// Renders one avatar (optionally restricted to a component) under given
// params; used by the CLI and the acceptance suite.
GaussianBatch avatar_batch(const AvatarCheckpoint& avatar, DecoderParams& decoders,
                           const Dataset& data, const BodyParams& params,
                           float offset_radius = 0.1f);

}  // namespace lavt
