#pragma once

#include <vector>

#include "lavt/body_model.hpp"
#include "lavt/render_op.hpp"
#include "lavt/template_atlas.hpp"

namespace lavt {

// Per-seed affine transform blended from the joint transforms. For a fixed
// pose these are constants, so the posed attributes stay linear in the
// canonical ones: mu' = L mu + t, R' = polar(L) R, s' = s * colnorm(L).
struct SeedTransform {
    Mat3 linear;
    Vec3 trans;
    Mat3 rot;        // orthogonal polar factor of linear
    Vec3 col_scale;  // column norms of linear
};

struct DeformContext {
    std::vector<SeedTransform> seed_tf;
    int64_t degenerate = 0;  // blends with det outside [0.5, 2]
};

DeformContext build_deform_context(const SeedSet& seeds, const std::vector<Mat4>& joint_tf);

// Per-seed canonical-space offsets offsets_s*beta + offsets_e*psi +
// offsets_p*posefeat(theta), flattened N*3.
std::vector<float> warp_offsets(const SeedSet& seeds, const BodyModel& model,
                                const BodyParams& params);

// Plain-array paths used by animation, the toy-scene generator and tests.
void warp_shape_inplace(GaussianBatch& batch, const SeedSet& seeds, const BodyModel& model,
                        const BodyParams& params, int64_t first_seed = 0);
void pose_transform_inplace(GaussianBatch& batch, const DeformContext& ctx,
                            int64_t first_seed = 0);

// Tape-tracked paths. `first_seed` selects this component's slice of the
// seed-ordered context/offsets.
TapeGaussians warp_shape(const TapeGaussians& g, const std::vector<float>& offsets,
                         int64_t first_seed);
TapeGaussians pose_transform(const TapeGaussians& g, const DeformContext& ctx,
                             int64_t first_seed);

}  // namespace lavt
