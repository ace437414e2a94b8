#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lavt/body_model.hpp"
#include "lavt/geometry.hpp"

namespace lavt {

enum class Label : uint8_t { body = 0, top = 1, bottom = 2, hair = 3, shoes = 4 };
constexpr int kNumLabels = 5;

const char* label_name(Label l);
Label label_from_name(const std::string& name);
int label_layer(Label l);  // body -> 0, hair/shoes -> 1, top/bottom -> 2

// One component carved from the body surface: a face subset with per-corner
// UVs into its layer's 128x128 atlas. Exterior components are shells offset
// along vertex normals.
struct ComponentTemplate {
    Label label = Label::body;
    int layer = 0;
    float normal_offset = 0.f;       // meters
    std::vector<int64_t> faces;      // indices into the atlas model's faces
    std::vector<float> uv;           // faces.size()*3*2, in [0,1]^2
    std::array<float, 4> uv_box{};   // u0,v0,u1,v1 bound of this component's islands
};

struct TemplateAtlas {
    BodyModel model;  // the (possibly subdivided) model the templates index into
    std::array<ComponentTemplate, kNumLabels> templates;
    int subdiv_levels = 0;
};

// Builds the five component templates from the model's vertex regions:
// body = all faces (layer 0); hair = scalp, shoes = feet (layer 1); top =
// torso+arms, bottom = pelvis+legs (layer 2). Exterior shells sit 5 mm off
// the surface.
TemplateAtlas default_atlas(const BodyModel& model);

// 4-way face subdivision applied `levels` times to the model and every
// template jointly; UVs and vertex attributes are midpoint-interpolated.
void subdivide(TemplateAtlas& atlas, int levels);

struct GaussianSeed {
    Label label = Label::body;
    int64_t face = 0;
    Vec3 mu0;        // canonical face centroid (with shell offset)
    Mat3 r0;         // tangent frame, columns (edge, normal x edge, normal)
    Vec3 s0;         // base scales, thin along the normal
    float uv[2] = {0, 0};
    std::vector<float> shape_off;  // 3 x n_shape, row-major (c, basis)
    std::vector<float> expr_off;   // 3 x n_expr
    std::vector<float> pose_off;   // 3 x n_pose
    std::vector<float> weights;    // J, sums to 1
};

struct SeedSet {
    std::vector<GaussianSeed> seeds;  // grouped in Label order
    std::array<std::pair<int64_t, int64_t>, kNumLabels> label_range{};
    int64_t skipped_degenerate = 0;
    int64_t clamped_outside_grid = 0;

    int64_t count(Label l) const {
        auto [b, e] = label_range[size_t(l)];
        return e - b;
    }
};

SeedSet init_seeds(const TemplateAtlas& atlas);

// Bakes per-seed blendshape offsets by barycentric (centroid) interpolation
// of the face's vertex blendshape rows.
void bake_offsets(SeedSet& seeds, const BodyModel& model);

// Low-resolution volumetric field of fused skinning weights over the
// canonical bounding box; values live at cell centers.
struct SkinningField {
    int res = 64;
    Vec3 bbox_min, bbox_max;
    Vec3 step;                  // cell size per axis
    int64_t n_joints = 0;
    std::vector<float> weights; // res^3 * J, cell-major

    // Trilinear lookup between cell centers, renormalized. Sets *clamped when
    // the point falls outside the grid.
    std::vector<float> lookup(const Vec3& p, bool* clamped = nullptr) const;
};

SkinningField build_skinning_field(const BodyModel& model, int res = 64);

// Body seeds take barycentric face weights; exterior seeds read the fused
// field at their (offset) position.
void assign_weights(SeedSet& seeds, const BodyModel& model, const SkinningField& field);

// Bundle serialization: <prefix>.ckpt holds faces/uvs per template in the
// checkpoint tensor format, <prefix>.json maps labels to layer, UV box and
// face count.
void save_template_bundle(const TemplateAtlas& atlas, const std::string& prefix);
TemplateAtlas load_template_bundle(const BodyModel& model, const std::string& prefix);

}  // namespace lavt
