#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lavt/body_model.hpp"
#include "lavt/gaussians.hpp"
#include "lavt/losses.hpp"

namespace lavt {

// ---- PNG (8-bit) ----------------------------------------------------------
void save_png_rgb(const std::string& path, const Tensor& img);   // (H,W,3) in [0,1]
void save_png_gray(const std::string& path, const Tensor& img);  // (H,W) in [0,1]
// raw 8-bit grayscale values 0..255 (used for indexed segmentation maps)
void save_png_index(const std::string& path, const Tensor& img);
Tensor load_png_rgb(const std::string& path);
Tensor load_png_gray(const std::string& path);
Tensor load_png_index(const std::string& path);

// raw f32 image dump for tests (single-tensor checkpoint)
void save_image_f32(const std::string& path, const Tensor& img);
Tensor load_image_f32(const std::string& path);

// ---- PLY ------------------------------------------------------------------
// Per-vertex x,y,z, opacity, scale_0..2, rot_0..3 (unit quaternion),
// red,green,blue (float in [0,1]) and a uchar label.
void export_ply(const GaussianBatch& batch, const std::string& path, bool binary = true);
GaussianBatch import_ply(const std::string& path);

// ---- Scene manifests ------------------------------------------------------
struct ViewEntry {
    Camera camera;
    std::string rgb, fg_mask, seg;             // file names relative to the manifest
    std::array<std::string, kNumLabels> comp_mask;
    std::array<std::string, kNumLabels> comp_rgb;  // optional ground-truth renders
};

struct SceneManifest {
    std::string subject;
    std::string model_path;  // body model checkpoint, relative to the manifest
    int subdiv_levels = 1;
    BodyParams params;
    Vec3 background{1.f, 1.f, 1.f};
    std::vector<ViewEntry> views;
    std::optional<ViewEntry> holdout;
};

void save_manifest(const SceneManifest& m, const std::string& path);
SceneManifest load_manifest(const std::string& path);

struct SceneTruth {
    SceneManifest manifest;
    std::string dir;
    std::vector<ViewTruth> views;
    std::array<std::vector<Tensor>, kNumLabels> comp_rgb;  // per view, when present
    std::optional<ViewTruth> holdout;
    std::array<Tensor, kNumLabels> holdout_comp_rgb;
};

// Loads and validates every referenced image: rgb normalized to [0,1], masks
// binarized at 0.5, segmentation decoded from indices (0 = background,
// 1..5 = body, top, bottom, hair, shoes). Component masks are derived from
// the segmentation when their files are absent.
SceneTruth load_scene(const std::string& manifest_path);

}  // namespace lavt
