#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lavt/geometry.hpp"

namespace lavt {

// Surface regions used for component templates and the hand-color prior.
enum class Region : int32_t {
    pelvis = 0,
    torso,
    neck,
    head,
    scalp,
    upper_arm_l,
    upper_arm_r,
    forearm_l,
    forearm_r,
    hand_l,
    hand_r,
    thigh_l,
    thigh_r,
    shin_l,
    shin_r,
    foot_l,
    foot_r,
};

// SMPL-X-structured parametric body: rest template, blendshape bases, joint
// regressor, kinematic tree and skinning weights. Immutable after load; all
// operations are pure.
struct BodyModel {
    int64_t n_verts = 0;
    int64_t n_faces = 0;
    int64_t n_joints = 0;
    int64_t n_shape = 0;  // N_beta
    int64_t n_expr = 0;   // N_psi
    int64_t n_pose = 0;   // 9 * (n_joints - 1)

    std::vector<float> template_verts;  // V*3
    std::vector<int32_t> faces;         // F*3
    std::vector<float> shape_dirs;      // V*3*n_shape
    std::vector<float> pose_dirs;       // V*3*n_pose
    std::vector<float> expr_dirs;       // V*3*n_expr
    std::vector<float> j_regressor;     // J*V, rows sum to 1
    std::vector<int32_t> parents;       // J, parents[0] = -1
    std::vector<float> lbs_weights;     // V*J, rows sum to 1
    std::vector<int32_t> vertex_region; // V, Region ids (required by the atlas)

    Vec3 vertex(int64_t v) const {
        return {template_verts[v * 3], template_verts[v * 3 + 1], template_verts[v * 3 + 2]};
    }

    void validate() const;  // throws on any violated invariant
};

struct BodyParams {
    std::vector<float> beta;   // n_shape
    std::vector<float> theta;  // J*3 axis-angle
    std::vector<float> psi;    // n_expr

    static BodyParams rest(const BodyModel& m);
};

// Pose feature driving the pose blendshapes: concatenated (R_j - I) for the
// non-root joints, 9*(J-1) values.
std::vector<float> pose_feature(const BodyModel& model, const std::vector<float>& theta);

// T(beta,theta,psi) = T_c + shape + expression + pose blendshape offsets.
std::vector<float> canonical_mesh(const BodyModel& model, const BodyParams& params);

// Rest joint locations J(beta) = regressor * (T_c + shape offsets).
std::vector<float> skeleton(const BodyModel& model, const std::vector<float>& beta);

// Per-joint rest-to-posed transforms B_i, composed root to leaf.
std::vector<Mat4> rigid_transforms(const BodyModel& model, const std::vector<float>& beta,
                                   const std::vector<float>& theta);

// Full forward model: LBS(T(beta,theta,psi), J(beta), theta, W).
std::vector<float> lbs_mesh(const BodyModel& model, const BodyParams& params);

// Procedural capsule-limb humanoid with SMPL-like 24 joints, ~800 vertices,
// 10 shape and 10 expression blendshapes. Deterministic in the seed.
BodyModel make_toy_model(uint64_t seed);

// Checkpoint round-trip using the reserved tensor names (template, faces,
// shape_dirs, pose_dirs, expr_dirs, j_regressor, parents, lbs_weights,
// regions). Externally converted SMPL-X arrays map onto the same names; see
// docs/model_format.md.
void save_body_model(const BodyModel& model, const std::string& path);
BodyModel load_body_model(const std::string& path);

}  // namespace lavt
