#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "lavt/feature_plane.hpp"
#include "lavt/render_op.hpp"

namespace lavt {

struct LossWeights {
    float color = 18.f;
    float mask = 9.f;
    float per = 0.05f;
    float seg = 9.f;
    float maskin = 5.f;
    float skin = 0.5f;
    float offset = 5.f;
    float smooth = 0.5f;

    void validate() const;
};

// Optional perceptual term; absent by default (the corresponding loss is 0).
struct PerceptualHook {
    virtual ~PerceptualHook() = default;
    virtual Tensor operator()(const Tensor& render_rgb, const Tensor& truth_rgb) = 0;
};

// Ground truth for one view. Component masks are full silhouettes; class
// masks are the visible regions cut from the segmentation map.
struct ViewTruth {
    Camera camera;
    Tensor rgb;                          // (H,W,3) in [0,1]
    Tensor fg_mask;                      // (H,W) in {0,1}
    std::array<Tensor, kNumLabels> comp_mask;   // (H,W)
    std::array<Tensor, kNumLabels> class_mask;  // (H,W), from the segmentation
    Tensor seg_onehot;                   // (H,W,5)
};

// Everything the fitting loss consumes for one view.
struct RenderSet {
    Tensor full_rgb, full_alpha;
    std::array<Tensor, kNumLabels> comp_rgb, comp_alpha;
    Tensor seg;                // (H,W,5)
    Tensor body_sil_detached;  // (H,W), rendered with opacity detached to 1
};

struct LossBreakdown {
    std::vector<std::pair<std::string, float>> terms;
    void add(const std::string& name, float v);
    float get(const std::string& name) const;
    std::string to_json() const;
};

// Eq.-style reconstruction objective: Huber color+mask on the full avatar and
// on every component, plus the segmentation term and the perceptual hook.
Tensor recon_loss(const RenderSet& renders, const ViewTruth& truth, const LossWeights& w,
                  float huber_delta, PerceptualHook* hook, LossBreakdown* breakdown);

// Penalizes body silhouette sticking outside the foreground; expects the
// detached-full-opacity render so opacity receives no gradient.
Tensor maskin_loss(const Tensor& body_sil_detached, const Tensor& fg_mask, float lambda,
                   LossBreakdown* breakdown);

// Pulls occluded body pixels toward the hand-region skin color estimate.
Tensor skin_loss(const Tensor& body_rgb, const Tensor& occlusion_mask, const Vec3& skin_color,
                 float lambda, float huber_delta, LossBreakdown* breakdown);

// Offset shrinkage plus total-variation smoothness of the attribute maps,
// computed within each layer.
Tensor reg_loss(const AttributeMaps& maps,
                const std::array<Tensor, kNumLabels>& raw_offsets, float lambda_offset,
                float lambda_smooth, LossBreakdown* breakdown);

// Mean ground-truth rgb over pixels where the hand silhouette exceeds 0.5;
// falls back to the configured default when the region is empty.
Vec3 skin_color_estimate(const Tensor& hand_silhouette, const Tensor& truth_rgb,
                         const Vec3& fallback, bool* used_fallback = nullptr);
constexpr Vec3 kSkinFallback{0.8f, 0.6f, 0.5f};

// Union of the exterior-component masks restricted to the foreground.
Tensor occlusion_mask(const ViewTruth& truth);

}  // namespace lavt
