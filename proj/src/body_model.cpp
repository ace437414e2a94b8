#include "lavt/body_model.hpp"

#include <algorithm>
#include <cmath>

#include "lavt/checkpoint.hpp"
#include "lavt/common.hpp"
#include "lavt/rng.hpp"

namespace lavt {

void BodyModel::validate() const {
    LAVT_CHECK(int64_t(template_verts.size()) == n_verts * 3, "body model: bad template size");
    LAVT_CHECK(int64_t(faces.size()) == n_faces * 3, "body model: bad face size");
    LAVT_CHECK(int64_t(parents.size()) == n_joints, "body model: bad parent array");
    LAVT_CHECK(parents[0] == -1, "body model: joint 0 must be the root");
    for (int64_t j = 1; j < n_joints; ++j)
        LAVT_CHECK(parents[j] >= 0 && parents[j] < j,
                   "body model: parent of joint %lld must precede it", (long long)j);
    LAVT_CHECK(int64_t(lbs_weights.size()) == n_verts * n_joints, "body model: bad weights");
    for (int64_t v = 0; v < n_verts; ++v) {
        float s = 0.f;
        for (int64_t j = 0; j < n_joints; ++j) {
            float w = lbs_weights[v * n_joints + j];
            LAVT_CHECK(w >= 0.f, "body model: negative skinning weight at vertex %lld",
                       (long long)v);
            s += w;
        }
        LAVT_CHECK(std::fabs(s - 1.f) <= 1e-5f,
                   "body model: weights of vertex %lld sum to %g", (long long)v, s);
    }
    LAVT_CHECK(int64_t(j_regressor.size()) == n_joints * n_verts, "body model: bad regressor");
    for (int64_t j = 0; j < n_joints; ++j) {
        float s = 0.f;
        for (int64_t v = 0; v < n_verts; ++v) s += j_regressor[j * n_verts + v];
        LAVT_CHECK(std::fabs(s - 1.f) <= 1e-5f,
                   "body model: regressor row %lld sums to %g", (long long)j, s);
    }
    for (int32_t f : faces)
        LAVT_CHECK(f >= 0 && f < n_verts, "body model: face references vertex %d", f);
}

BodyParams BodyParams::rest(const BodyModel& m) {
    BodyParams p;
    p.beta.assign(m.n_shape, 0.f);
    p.theta.assign(m.n_joints * 3, 0.f);
    p.psi.assign(m.n_expr, 0.f);
    return p;
}

std::vector<float> pose_feature(const BodyModel& model, const std::vector<float>& theta) {
    LAVT_CHECK(int64_t(theta.size()) == model.n_joints * 3,
               "pose_feature: expected %lld rotations, got %zu", (long long)model.n_joints,
               theta.size() / 3);
    std::vector<float> feat(9 * (model.n_joints - 1));
    for (int64_t j = 1; j < model.n_joints; ++j) {
        Mat3 r = rodrigues({theta[j * 3], theta[j * 3 + 1], theta[j * 3 + 2]});
        Mat3 d = r - Mat3::identity();
        std::copy(d.m.begin(), d.m.end(), feat.begin() + (j - 1) * 9);
    }
    return feat;
}

std::vector<float> canonical_mesh(const BodyModel& model, const BodyParams& params) {
    LAVT_CHECK(int64_t(params.beta.size()) == model.n_shape,
               "canonical_mesh: %zu shape coefficients, model has %lld", params.beta.size(),
               (long long)model.n_shape);
    LAVT_CHECK(int64_t(params.psi.size()) == model.n_expr,
               "canonical_mesh: %zu expression coefficients, model has %lld",
               params.psi.size(), (long long)model.n_expr);
    for (float v : params.beta) LAVT_CHECK(std::isfinite(v), "canonical_mesh: non-finite beta");
    std::vector<float> verts = model.template_verts;
    const int64_t V = model.n_verts;
    for (int64_t b = 0; b < model.n_shape; ++b) {
        float c = params.beta[b];
        if (c == 0.f) continue;
        for (int64_t i = 0; i < V * 3; ++i) verts[i] += c * model.shape_dirs[i * model.n_shape + b];
    }
    for (int64_t b = 0; b < model.n_expr; ++b) {
        float c = params.psi[b];
        if (c == 0.f) continue;
        for (int64_t i = 0; i < V * 3; ++i) verts[i] += c * model.expr_dirs[i * model.n_expr + b];
    }
    std::vector<float> feat = pose_feature(model, params.theta);
    for (int64_t b = 0; b < model.n_pose; ++b) {
        float c = feat[b];
        if (c == 0.f) continue;
        for (int64_t i = 0; i < V * 3; ++i) verts[i] += c * model.pose_dirs[i * model.n_pose + b];
    }
    return verts;
}

std::vector<float> skeleton(const BodyModel& model, const std::vector<float>& beta) {
    BodyParams p = BodyParams::rest(model);
    LAVT_CHECK(int64_t(beta.size()) == model.n_shape, "skeleton: beta size mismatch");
    p.beta = beta;
    // expression and pose terms do not move joints; use shaped template only
    std::vector<float> verts = model.template_verts;
    for (int64_t b = 0; b < model.n_shape; ++b) {
        float c = beta[b];
        if (c == 0.f) continue;
        for (int64_t i = 0; i < model.n_verts * 3; ++i)
            verts[i] += c * model.shape_dirs[i * model.n_shape + b];
    }
    std::vector<float> joints(model.n_joints * 3, 0.f);
    for (int64_t j = 0; j < model.n_joints; ++j)
        for (int64_t v = 0; v < model.n_verts; ++v) {
            float w = model.j_regressor[j * model.n_verts + v];
            if (w == 0.f) continue;
            joints[j * 3 + 0] += w * verts[v * 3 + 0];
            joints[j * 3 + 1] += w * verts[v * 3 + 1];
            joints[j * 3 + 2] += w * verts[v * 3 + 2];
        }
    return joints;
}

std::vector<Mat4> rigid_transforms(const BodyModel& model, const std::vector<float>& beta,
                                   const std::vector<float>& theta) {
    std::vector<float> joints = skeleton(model, beta);
    const int64_t J = model.n_joints;
    std::vector<Mat4> world(J);
    for (int64_t j = 0; j < J; ++j) {
        Mat3 r = rodrigues({theta[j * 3], theta[j * 3 + 1], theta[j * 3 + 2]});
        Vec3 pos{joints[j * 3], joints[j * 3 + 1], joints[j * 3 + 2]};
        if (j == 0) {
            world[j] = Mat4::from_rt(r, pos);
        } else {
            int32_t p = model.parents[j];
            Vec3 off = pos - Vec3{joints[p * 3], joints[p * 3 + 1], joints[p * 3 + 2]};
            world[j] = world[p] * Mat4::from_rt(r, off);
        }
    }
    std::vector<Mat4> out(J);
    for (int64_t j = 0; j < J; ++j) {
        Vec3 pos{joints[j * 3], joints[j * 3 + 1], joints[j * 3 + 2]};
        out[j] = world[j] * Mat4::from_rt(Mat3::identity(), pos * -1.f);
    }
    return out;
}

std::vector<float> lbs_mesh(const BodyModel& model, const BodyParams& params) {
    std::vector<float> verts = canonical_mesh(model, params);
    std::vector<Mat4> b = rigid_transforms(model, params.beta, params.theta);
    std::vector<float> out(verts.size());
    const int64_t J = model.n_joints;
#pragma omp parallel for schedule(static)
    for (int64_t v = 0; v < model.n_verts; ++v) {
        Vec3 p{verts[v * 3], verts[v * 3 + 1], verts[v * 3 + 2]};
        Vec3 acc{0, 0, 0};
        for (int64_t j = 0; j < J; ++j) {
            float w = model.lbs_weights[v * J + j];
            if (w == 0.f) continue;
            acc += b[j].transform_point(p) * w;
        }
        out[v * 3 + 0] = acc.x;
        out[v * 3 + 1] = acc.y;
        out[v * 3 + 2] = acc.z;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Toy model generator

namespace {

struct RingRecord {
    Vec3 center;
    std::vector<int32_t> verts;
};

struct Builder {
    std::vector<float> verts;
    std::vector<int32_t> faces;
    std::vector<int32_t> region;
    std::vector<RingRecord> rings;

    int32_t add_vertex(const Vec3& p, Region r) {
        verts.insert(verts.end(), {p.x, p.y, p.z});
        region.push_back(static_cast<int32_t>(r));
        return int32_t(verts.size() / 3 - 1);
    }
    void add_face(int32_t a, int32_t b, int32_t c) { faces.insert(faces.end(), {a, b, c}); }

    // Closed capsule from a to b; scalp_from >= 0 marks vertices whose axial
    // fraction is at least that value with the scalp region.
    void add_capsule(const Vec3& a, const Vec3& b, float radius, int n_rings, int segs,
                     Region reg, float scalp_from = -1.f) {
        Vec3 axis = b - a;
        Vec3 dir = normalized(axis);
        Vec3 ref = std::fabs(dir.y) < 0.9f ? Vec3{0, 1, 0} : Vec3{1, 0, 0};
        Vec3 u = normalized(cross(ref, dir));
        Vec3 v = cross(dir, u);

        auto region_at = [&](float frac) {
            return (scalp_from >= 0.f && frac >= scalp_from) ? Region::scalp : reg;
        };

        std::vector<std::vector<int32_t>> ring_ids(n_rings);
        for (int k = 0; k < n_rings; ++k) {
            float f = n_rings == 1 ? 0.f : float(k) / float(n_rings - 1);
            Vec3 c = a + axis * f;
            RingRecord rec;
            rec.center = c;
            for (int i = 0; i < segs; ++i) {
                float t = 6.28318530717958647692f * float(i) / float(segs);
                Vec3 p = c + (u * std::cos(t) + v * std::sin(t)) * radius;
                int32_t id = add_vertex(p, region_at(f));
                ring_ids[k].push_back(id);
                rec.verts.push_back(id);
            }
            rings.push_back(std::move(rec));
        }
        int32_t pole_a = add_vertex(a - dir * (radius * 0.45f), region_at(0.f));
        int32_t pole_b = add_vertex(b + dir * (radius * 0.45f), region_at(1.f));

        for (int k = 0; k + 1 < n_rings; ++k)
            for (int i = 0; i < segs; ++i) {
                int j = (i + 1) % segs;
                int32_t v00 = ring_ids[k][i], v01 = ring_ids[k][j];
                int32_t v10 = ring_ids[k + 1][i], v11 = ring_ids[k + 1][j];
                add_face(v00, v01, v11);
                add_face(v00, v11, v10);
            }
        for (int i = 0; i < segs; ++i) {
            int j = (i + 1) % segs;
            add_face(pole_a, ring_ids[0][j], ring_ids[0][i]);
            add_face(pole_b, ring_ids[n_rings - 1][i], ring_ids[n_rings - 1][j]);
        }
    }
};

struct BoneSeg {
    Vec3 a, b;
};

float point_segment_dist2(const Vec3& p, const Vec3& a, const Vec3& b) {
    Vec3 ab = b - a;
    float t = dot(p - a, ab) / std::max(dot(ab, ab), 1e-12f);
    t = std::min(1.f, std::max(0.f, t));
    Vec3 q = a + ab * t;
    Vec3 d = p - q;
    return dot(d, d);
}

float smoothstep(float x, float lo, float hi) {
    float t = std::min(1.f, std::max(0.f, (x - lo) / (hi - lo)));
    return t * t * (3.f - 2.f * t);
}

}  // namespace

BodyModel make_toy_model(uint64_t seed) {
    const Vec3 joints[24] = {
        {0.f, 0.f, 0.f},        // 0 pelvis
        {0.09f, -0.06f, 0.f},   // 1 l_hip
        {-0.09f, -0.06f, 0.f},  // 2 r_hip
        {0.f, 0.10f, 0.f},      // 3 spine1
        {0.10f, -0.48f, 0.f},   // 4 l_knee
        {-0.10f, -0.48f, 0.f},  // 5 r_knee
        {0.f, 0.22f, 0.f},      // 6 spine2
        {0.10f, -0.88f, 0.f},   // 7 l_ankle
        {-0.10f, -0.88f, 0.f},  // 8 r_ankle
        {0.f, 0.34f, 0.f},      // 9 spine3
        {0.10f, -0.95f, 0.12f},   // 10 l_foot
        {-0.10f, -0.95f, 0.12f},  // 11 r_foot
        {0.f, 0.46f, 0.f},      // 12 neck
        {0.06f, 0.42f, 0.f},    // 13 l_collar
        {-0.06f, 0.42f, 0.f},   // 14 r_collar
        {0.f, 0.56f, 0.f},      // 15 head
        {0.18f, 0.44f, 0.f},    // 16 l_shoulder
        {-0.18f, 0.44f, 0.f},   // 17 r_shoulder
        {0.42f, 0.44f, 0.f},    // 18 l_elbow
        {-0.42f, 0.44f, 0.f},   // 19 r_elbow
        {0.66f, 0.44f, 0.f},    // 20 l_wrist
        {-0.66f, 0.44f, 0.f},   // 21 r_wrist
        {0.74f, 0.44f, 0.f},    // 22 l_hand
        {-0.74f, 0.44f, 0.f},   // 23 r_hand
    };
    const int32_t parents[24] = {-1, 0, 0,  0,  1,  2,  3,  4,  5,  6,  7,  8,
                                 9,  9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

    Builder b;
    b.add_capsule({0, -0.10f, 0}, {0, 0.f, 0}, 0.125f, 4, 12, Region::pelvis);
    b.add_capsule({0, 0.02f, 0}, {0, 0.42f, 0}, 0.13f, 7, 12, Region::torso);
    b.add_capsule({0, 0.42f, 0}, {0, 0.50f, 0}, 0.05f, 3, 10, Region::neck);
    b.add_capsule({0, 0.50f, 0}, {0, 0.72f, 0}, 0.11f, 6, 12, Region::head, 0.6f);
    for (int side = 0; side < 2; ++side) {
        float s = side == 0 ? 1.f : -1.f;
        Region ua = side == 0 ? Region::upper_arm_l : Region::upper_arm_r;
        Region fa = side == 0 ? Region::forearm_l : Region::forearm_r;
        Region ha = side == 0 ? Region::hand_l : Region::hand_r;
        Region th = side == 0 ? Region::thigh_l : Region::thigh_r;
        Region sh = side == 0 ? Region::shin_l : Region::shin_r;
        Region ft = side == 0 ? Region::foot_l : Region::foot_r;
        b.add_capsule({s * 0.18f, 0.44f, 0}, {s * 0.42f, 0.44f, 0}, 0.05f, 4, 10, ua);
        b.add_capsule({s * 0.42f, 0.44f, 0}, {s * 0.66f, 0.44f, 0}, 0.042f, 4, 10, fa);
        b.add_capsule({s * 0.66f, 0.44f, 0}, {s * 0.80f, 0.44f, 0}, 0.035f, 3, 10, ha);
        b.add_capsule({s * 0.095f, -0.06f, 0}, {s * 0.10f, -0.48f, 0}, 0.072f, 6, 10, th);
        b.add_capsule({s * 0.10f, -0.48f, 0}, {s * 0.10f, -0.88f, 0}, 0.052f, 6, 10, sh);
        b.add_capsule({s * 0.10f, -0.92f, -0.05f}, {s * 0.10f, -0.92f, 0.16f}, 0.042f, 4, 10,
                      ft);
    }

    BodyModel m;
    m.n_verts = int64_t(b.verts.size() / 3);
    m.n_faces = int64_t(b.faces.size() / 3);
    m.n_joints = 24;
    m.n_shape = 10;
    m.n_expr = 10;
    m.n_pose = 9 * 23;
    m.template_verts = std::move(b.verts);
    m.faces = std::move(b.faces);
    m.vertex_region = std::move(b.region);
    m.parents.assign(parents, parents + 24);

    const int64_t V = m.n_verts;

    // joint regressor: uniform over the generated ring nearest each joint
    m.j_regressor.assign(24 * V, 0.f);
    for (int j = 0; j < 24; ++j) {
        const RingRecord* best = nullptr;
        float best_d = 1e9f;
        for (const auto& r : b.rings) {
            Vec3 d = r.center - joints[j];
            float dd = dot(d, d);
            if (dd < best_d) {
                best_d = dd;
                best = &r;
            }
        }
        float w = 1.f / float(best->verts.size());
        for (int32_t v : best->verts) m.j_regressor[int64_t(j) * V + v] = w;
    }

    // skinning: gaussian falloff to each joint's bone segment, normalized
    BoneSeg bones[24];
    for (int j = 0; j < 24; ++j) bones[j] = {joints[j], joints[j]};
    auto set_bone = [&](int j, const Vec3& to) { bones[j] = {joints[j], to}; };
    set_bone(0, joints[3]);
    set_bone(1, joints[4]);
    set_bone(2, joints[5]);
    set_bone(3, joints[6]);
    set_bone(6, joints[9]);
    set_bone(9, joints[12]);
    set_bone(4, joints[7]);
    set_bone(5, joints[8]);
    set_bone(7, joints[10]);
    set_bone(8, joints[11]);
    set_bone(10, joints[10] + Vec3{0, 0, 0.06f});
    set_bone(11, joints[11] + Vec3{0, 0, 0.06f});
    set_bone(12, joints[15]);
    set_bone(15, {0, 0.72f, 0});
    // collars keep point bones; their influence stays local
    set_bone(16, joints[18]);
    set_bone(17, joints[19]);
    set_bone(18, joints[20]);
    set_bone(19, joints[21]);
    set_bone(20, joints[22]);
    set_bone(21, joints[23]);
    set_bone(22, {0.80f, 0.44f, 0});
    set_bone(23, {-0.80f, 0.44f, 0});

    const float tau = 0.12f;
    m.lbs_weights.assign(V * 24, 0.f);
    for (int64_t v = 0; v < V; ++v) {
        Vec3 p = m.vertex(v);
        float d2[24];
        float d2min = 1e9f;
        for (int j = 0; j < 24; ++j) {
            d2[j] = point_segment_dist2(p, bones[j].a, bones[j].b);
            d2min = std::min(d2min, d2[j]);
        }
        float sum = 0.f;
        for (int j = 0; j < 24; ++j) {
            float w = std::exp(-(d2[j] - d2min) / (2.f * tau * tau));
            if (w < 1e-6f) w = 0.f;
            m.lbs_weights[v * 24 + j] = w;
            sum += w;
        }
        for (int j = 0; j < 24; ++j) m.lbs_weights[v * 24 + j] /= sum;
    }

    // shape blendshapes: smooth global and limb scaling fields
    m.shape_dirs.assign(V * 3 * m.n_shape, 0.f);
    auto sd = [&](int64_t v, int c, int basis) -> float& {
        return m.shape_dirs[(v * 3 + c) * m.n_shape + basis];
    };
    const Vec3 head_c{0, 0.61f, 0};
    for (int64_t v = 0; v < V; ++v) {
        Vec3 p = m.vertex(v);
        // 0: global scale
        sd(v, 0, 0) = 0.06f * p.x;
        sd(v, 1, 0) = 0.06f * p.y;
        sd(v, 2, 0) = 0.06f * p.z;
        // 1: height
        sd(v, 1, 1) = 0.08f * p.y;
        // 2: width
        sd(v, 0, 2) = 0.05f * p.x;
        sd(v, 2, 2) = 0.05f * p.z;
        // 3: torso girth
        float wt = smoothstep(-std::fabs(p.y - 0.2f), -0.35f, -0.05f) *
                   smoothstep(-std::fabs(p.x), -0.25f, -0.05f);
        sd(v, 0, 3) = 0.05f * p.x * wt;
        sd(v, 2, 3) = 0.08f * p.z * wt;
        // 4: arm length
        float wa = smoothstep(std::fabs(p.x), 0.15f, 0.6f);
        sd(v, 0, 4) = 0.10f * (p.x > 0 ? 1.f : -1.f) * wa;
        // 5: leg length
        float wl = smoothstep(-p.y, 0.05f, 0.8f);
        sd(v, 1, 5) = -0.10f * wl;
        // 6: head size
        Vec3 dh = p - head_c;
        float wh = std::exp(-dot(dh, dh) / (2.f * 0.12f * 0.12f));
        sd(v, 0, 6) = dh.x * 0.3f * wh;
        sd(v, 1, 6) = dh.y * 0.3f * wh;
        sd(v, 2, 6) = dh.z * 0.3f * wh;
        // 7: belly
        float wb = std::exp(-((p.y - 0.08f) * (p.y - 0.08f) + p.x * p.x) / (2.f * 0.13f * 0.13f));
        sd(v, 2, 7) = (p.z > 0 ? 0.06f : 0.01f) * wb;
        // 8: shoulder width
        float ws = std::exp(-(p.y - 0.44f) * (p.y - 0.44f) / (2.f * 0.08f * 0.08f)) *
                   smoothstep(std::fabs(p.x), 0.05f, 0.2f);
        sd(v, 0, 8) = 0.06f * (p.x > 0 ? 1.f : -1.f) * ws;
        // 9: hip width
        float wp = std::exp(-(p.y + 0.08f) * (p.y + 0.08f) / (2.f * 0.1f * 0.1f));
        sd(v, 0, 9) = 0.05f * p.x * wp;
    }

    // expression blendshapes: radial bumps on the face
    m.expr_dirs.assign(V * 3 * m.n_expr, 0.f);
    for (int e = 0; e < 10; ++e) {
        float ang = 0.6f * float(e) - 2.7f;
        Vec3 c = head_c + Vec3{0.07f * std::sin(ang), 0.05f * std::cos(ang), 0.09f};
        for (int64_t v = 0; v < V; ++v) {
            Region r = static_cast<Region>(m.vertex_region[v]);
            if (r != Region::head && r != Region::scalp) continue;
            Vec3 p = m.vertex(v);
            Vec3 d = p - c;
            float w = std::exp(-dot(d, d) / (2.f * 0.03f * 0.03f));
            if (w < 1e-4f) continue;
            Vec3 dir = normalized(p - Vec3{head_c.x, p.y, head_c.z});
            m.expr_dirs[(v * 3 + 0) * m.n_expr + e] = 0.012f * w * dir.x;
            m.expr_dirs[(v * 3 + 1) * m.n_expr + e] = 0.012f * w * dir.y;
            m.expr_dirs[(v * 3 + 2) * m.n_expr + e] = 0.012f * w * dir.z;
        }
    }

    // pose blendshapes: small random corrective field
    Rng rng(seed ^ 0x9e70cbULL);
    m.pose_dirs.resize(V * 3 * m.n_pose);
    for (auto& x : m.pose_dirs) x = 1e-3f * rng.normal();

    m.validate();
    return m;
}

// ---------------------------------------------------------------------------

namespace {

Tensor to_tensor_f(const std::vector<float>& v, Shape s) {
    return Tensor::from_data(std::move(s), v);
}
Tensor to_tensor_i(const std::vector<int32_t>& v, Shape s) {
    std::vector<float> f(v.begin(), v.end());
    return Tensor::from_data(std::move(s), std::move(f));
}
std::vector<int32_t> to_i32(const Tensor& t) {
    std::vector<int32_t> v(t.numel());
    for (int64_t i = 0; i < t.numel(); ++i) v[i] = int32_t(std::lround(t.data()[i]));
    return v;
}

}  // namespace

void save_body_model(const BodyModel& m, const std::string& path) {
    Checkpoint c;
    c.put("template", to_tensor_f(m.template_verts, {m.n_verts, 3}));
    c.put("faces", to_tensor_i(m.faces, {m.n_faces, 3}));
    c.put("shape_dirs", to_tensor_f(m.shape_dirs, {m.n_verts, 3, m.n_shape}));
    c.put("pose_dirs", to_tensor_f(m.pose_dirs, {m.n_verts, 3, m.n_pose}));
    c.put("expr_dirs", to_tensor_f(m.expr_dirs, {m.n_verts, 3, m.n_expr}));
    c.put("j_regressor", to_tensor_f(m.j_regressor, {m.n_joints, m.n_verts}));
    c.put("parents", to_tensor_i(m.parents, {m.n_joints}));
    c.put("lbs_weights", to_tensor_f(m.lbs_weights, {m.n_verts, m.n_joints}));
    c.put("regions", to_tensor_i(m.vertex_region, {m.n_verts}));
    save_checkpoint(c, path);
}

BodyModel load_body_model(const std::string& path) {
    Checkpoint c = load_checkpoint(path);
    BodyModel m;
    Tensor tmpl = c.get("template");
    m.n_verts = tmpl.dim(0);
    m.template_verts = tmpl.vec();
    Tensor faces = c.get("faces");
    m.n_faces = faces.dim(0);
    m.faces = to_i32(faces);
    Tensor sd = c.get("shape_dirs");
    m.n_shape = sd.dim(2);
    m.shape_dirs = sd.vec();
    Tensor pd = c.get("pose_dirs");
    m.n_pose = pd.dim(2);
    m.pose_dirs = pd.vec();
    Tensor ed = c.get("expr_dirs");
    m.n_expr = ed.dim(2);
    m.expr_dirs = ed.vec();
    Tensor jr = c.get("j_regressor");
    m.n_joints = jr.dim(0);
    m.j_regressor = jr.vec();
    m.parents = to_i32(c.get("parents"));
    m.lbs_weights = c.get("lbs_weights").vec();
    if (c.has("regions"))
        m.vertex_region = to_i32(c.get("regions"));
    else
        m.vertex_region.assign(m.n_verts, int32_t(Region::torso));
    LAVT_CHECK(m.n_pose == 9 * (m.n_joints - 1), "body model: pose basis has %lld columns, "
               "expected 9*(J-1)=%lld", (long long)m.n_pose, (long long)(9 * (m.n_joints - 1)));
    m.validate();
    return m;
}

}  // namespace lavt
