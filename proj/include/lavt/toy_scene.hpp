#pragma once

#include <string>

#include "lavt/assets.hpp"
#include "lavt/deformation.hpp"
#include "lavt/template_atlas.hpp"

namespace lavt {

struct ToySceneConfig {
    uint64_t seed = 7;
    int views = 8;
    int size = 128;
    int subdiv_levels = 1;
    float mask_noise_rate = 0.f;  // salt-noise rate applied to masks
    int noisy_views = 0;          // at most 2
    Vec3 background{1.f, 1.f, 1.f};
};

// Hand-constructed avatar with known per-component colors; silhouettes and
// segmentation derived from it are exact.
struct ToyAvatar {
    BodyModel model;
    TemplateAtlas atlas;
    SeedSet seeds;
    BodyParams params;
    GaussianBatch canonical;
    GaussianBatch posed;
};

ToyAvatar build_toy_avatar(uint64_t seed, int subdiv_levels);

Camera toy_camera(int view, int views, int size);
Camera toy_holdout_camera(int views, int size);

// Writes manifest.json, model.ckpt and all view images; returns the manifest
// path. Byte-identical for identical configs.
std::string make_toy_scene(const ToySceneConfig& cfg, const std::string& out_dir);

}  // namespace lavt
