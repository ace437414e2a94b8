#include "lavt/template_atlas.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "lavt/checkpoint.hpp"
#include "lavt/common.hpp"

namespace lavt {

const char* label_name(Label l) {
    switch (l) {
        case Label::body: return "body";
        case Label::top: return "top";
        case Label::bottom: return "bottom";
        case Label::hair: return "hair";
        case Label::shoes: return "shoes";
    }
    return "?";
}

Label label_from_name(const std::string& name) {
    for (int i = 0; i < kNumLabels; ++i)
        if (name == label_name(Label(i))) return Label(i);
    fail(strf("unknown component label '%s'", name.c_str()));
}

int label_layer(Label l) {
    switch (l) {
        case Label::body: return 0;
        case Label::hair:
        case Label::shoes: return 1;
        case Label::top:
        case Label::bottom: return 2;
    }
    return 0;
}

namespace {

Region face_region(const BodyModel& m, int64_t f) {
    int32_t r0 = m.vertex_region[m.faces[f * 3 + 0]];
    int32_t r1 = m.vertex_region[m.faces[f * 3 + 1]];
    int32_t r2 = m.vertex_region[m.faces[f * 3 + 2]];
    if (r1 == r2) return Region(r1);
    return Region(r0);
}

bool region_in(Region r, std::initializer_list<Region> set) {
    for (Region s : set)
        if (r == s) return true;
    return false;
}

// Cylindrical unwrap of one region's faces into an island box. The capsule
// axis is taken as the dominant bbox extent.
void unwrap_region(const BodyModel& m, const std::vector<int64_t>& faces,
                   const std::array<float, 4>& box, std::vector<float>& uv_out,
                   std::vector<int64_t>& face_out) {
    if (faces.empty()) return;
    Vec3 lo{1e9f, 1e9f, 1e9f}, hi{-1e9f, -1e9f, -1e9f};
    for (int64_t f : faces)
        for (int k = 0; k < 3; ++k) {
            Vec3 p = m.vertex(m.faces[f * 3 + k]);
            for (int c = 0; c < 3; ++c) {
                lo[c] = std::min(lo[c], p[c]);
                hi[c] = std::max(hi[c], p[c]);
            }
        }
    Vec3 ext = hi - lo;
    int axis = ext.y >= ext.x && ext.y >= ext.z ? 1 : (ext.x >= ext.z ? 0 : 2);
    int t0 = (axis + 1) % 3, t1 = (axis + 2) % 3;
    Vec3 center = (lo + hi) * 0.5f;
    float axis_lo = lo[axis], axis_ext = std::max(ext[axis], 1e-6f);

    const float kInset = 0.06f;
    float u0 = box[0], v0 = box[1], uw = box[2] - box[0], vw = box[3] - box[1];
    auto emit = [&](float u, float v) {
        u = std::min(std::max(u, 0.f), 1.f);
        v = std::min(std::max(v, 0.f), 1.f);
        uv_out.push_back(u0 + (kInset + u * (1.f - 2 * kInset)) * uw);
        uv_out.push_back(v0 + (kInset + v * (1.f - 2 * kInset)) * vw);
    };

    const float kTwoPi = 6.28318530717958647692f;
    for (int64_t f : faces) {
        Vec3 p[3];
        for (int k = 0; k < 3; ++k) p[k] = m.vertex(m.faces[f * 3 + k]);
        Vec3 c = (p[0] + p[1] + p[2]) / 3.f;
        float ang_c = std::atan2(c[t1] - center[t1], c[t0] - center[t0]);
        for (int k = 0; k < 3; ++k) {
            float a = std::atan2(p[k][t1] - center[t1], p[k][t0] - center[t0]);
            float d = a - ang_c;
            while (d > 3.14159265f) d -= kTwoPi;
            while (d < -3.14159265f) d += kTwoPi;
            float u = (ang_c + d + 3.14159265f) / kTwoPi;
            float v = (p[k][axis] - axis_lo) / axis_ext;
            emit(u, v);
        }
        face_out.push_back(f);
    }
}

struct IslandPlan {
    Region region;
    std::array<float, 4> box;
};

// Lays island cells for the given regions in a grid inside `area` with
// inter-island gutters wider than one texel of the 128-atlas.
std::vector<IslandPlan> plan_islands(const std::vector<Region>& regions,
                                     std::array<float, 4> area) {
    int n = int(regions.size());
    int cols = int(std::ceil(std::sqrt(float(n))));
    int rows = (n + cols - 1) / cols;
    float uw = (area[2] - area[0]) / float(cols);
    float vw = (area[3] - area[1]) / float(rows);
    const float gut = 0.02f;  // ~2.5 texels at 128
    std::vector<IslandPlan> plans;
    for (int i = 0; i < n; ++i) {
        int cx = i % cols, cy = i / cols;
        std::array<float, 4> box = {area[0] + cx * uw + gut, area[1] + cy * vw + gut,
                                    area[0] + (cx + 1) * uw - gut,
                                    area[1] + (cy + 1) * vw - gut};
        plans.push_back({regions[i], box});
    }
    return plans;
}

ComponentTemplate build_component(const BodyModel& m, Label label,
                                  const std::vector<Region>& regions,
                                  std::array<float, 4> area, float normal_offset) {
    // faces per region
    std::map<Region, std::vector<int64_t>> by_region;
    for (int64_t f = 0; f < m.n_faces; ++f) {
        Region r = face_region(m, f);
        if (std::find(regions.begin(), regions.end(), r) != regions.end())
            by_region[r].push_back(f);
    }
    std::vector<Region> present;
    for (Region r : regions)
        if (by_region.count(r)) present.push_back(r);

    ComponentTemplate t;
    t.label = label;
    t.layer = label_layer(label);
    t.normal_offset = normal_offset;
    t.uv_box = area;
    for (const IslandPlan& plan : plan_islands(present, area))
        unwrap_region(m, by_region[plan.region], plan.box, t.uv, t.faces);
    LAVT_CHECK(!t.faces.empty(), "default_atlas: no faces found for component '%s' "
               "(missing region labels?)", label_name(label));
    return t;
}

}  // namespace

TemplateAtlas default_atlas(const BodyModel& model) {
    LAVT_CHECK(int64_t(model.vertex_region.size()) == model.n_verts,
               "default_atlas: model lacks per-vertex region labels");
    TemplateAtlas atlas;
    atlas.model = model;
    const float kShell = 0.005f;  // 5 mm

    std::vector<Region> all;
    for (int64_t f = 0; f < model.n_faces; ++f) all.push_back(face_region(model, f));
    std::set<Region> distinct(all.begin(), all.end());
    std::vector<Region> body_regions(distinct.begin(), distinct.end());

    atlas.templates[size_t(Label::body)] =
        build_component(model, Label::body, body_regions, {0.f, 0.f, 1.f, 1.f}, 0.f);
    atlas.templates[size_t(Label::hair)] =
        build_component(model, Label::hair, {Region::scalp}, {0.02f, 0.02f, 0.48f, 0.98f},
                        kShell);
    atlas.templates[size_t(Label::shoes)] =
        build_component(model, Label::shoes, {Region::foot_l, Region::foot_r},
                        {0.52f, 0.02f, 0.98f, 0.98f}, kShell);
    atlas.templates[size_t(Label::top)] = build_component(
        model, Label::top,
        {Region::torso, Region::upper_arm_l, Region::upper_arm_r, Region::forearm_l,
         Region::forearm_r},
        {0.02f, 0.02f, 0.48f, 0.98f}, kShell);
    atlas.templates[size_t(Label::bottom)] = build_component(
        model, Label::bottom,
        {Region::pelvis, Region::thigh_l, Region::thigh_r, Region::shin_l, Region::shin_r},
        {0.52f, 0.02f, 0.98f, 0.98f}, kShell);
    return atlas;
}

void subdivide(TemplateAtlas& atlas, int levels) {
    LAVT_CHECK(levels >= 0, "subdivide: negative level count");
    for (int lvl = 0; lvl < levels; ++lvl) {
        BodyModel& m = atlas.model;
        const int64_t V = m.n_verts, F = m.n_faces, J = m.n_joints;
        std::map<std::pair<int32_t, int32_t>, int32_t> midpoint;

        BodyModel nm;
        nm.n_joints = J;
        nm.n_shape = m.n_shape;
        nm.n_expr = m.n_expr;
        nm.n_pose = m.n_pose;
        nm.parents = m.parents;
        nm.template_verts = m.template_verts;
        nm.shape_dirs = m.shape_dirs;
        nm.pose_dirs = m.pose_dirs;
        nm.expr_dirs = m.expr_dirs;
        nm.lbs_weights = m.lbs_weights;
        nm.vertex_region = m.vertex_region;

        auto mid = [&](int32_t a, int32_t b) -> int32_t {
            auto key = std::make_pair(std::min(a, b), std::max(a, b));
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            int32_t id = int32_t(nm.template_verts.size() / 3);
            for (int c = 0; c < 3; ++c)
                nm.template_verts.push_back(
                    0.5f * (m.template_verts[a * 3 + c] + m.template_verts[b * 3 + c]));
            auto avg_rows = [&](const std::vector<float>& src, std::vector<float>& dst,
                                int64_t w) {
                for (int64_t i = 0; i < w; ++i)
                    dst.push_back(0.5f * (src[int64_t(a) * w + i] + src[int64_t(b) * w + i]));
            };
            avg_rows(m.shape_dirs, nm.shape_dirs, 3 * m.n_shape);
            avg_rows(m.pose_dirs, nm.pose_dirs, 3 * m.n_pose);
            avg_rows(m.expr_dirs, nm.expr_dirs, 3 * m.n_expr);
            // averaged convex weights stay convex; renormalize for safety
            float sum = 0.f;
            for (int64_t j = 0; j < J; ++j) {
                float w = 0.5f * (m.lbs_weights[int64_t(a) * J + j] +
                                  m.lbs_weights[int64_t(b) * J + j]);
                nm.lbs_weights.push_back(w);
                sum += w;
            }
            for (int64_t j = 0; j < J; ++j) nm.lbs_weights[nm.lbs_weights.size() - J + j] /= sum;
            nm.vertex_region.push_back(m.vertex_region[std::min(a, b)]);
            midpoint[key] = id;
            return id;
        };

        nm.faces.reserve(F * 12);
        for (int64_t f = 0; f < F; ++f) {
            int32_t v0 = m.faces[f * 3], v1 = m.faces[f * 3 + 1], v2 = m.faces[f * 3 + 2];
            int32_t m01 = mid(v0, v1), m12 = mid(v1, v2), m20 = mid(v2, v0);
            int32_t children[4][3] = {
                {v0, m01, m20}, {m01, v1, m12}, {m20, m12, v2}, {m01, m12, m20}};
            for (auto& ch : children) nm.faces.insert(nm.faces.end(), {ch[0], ch[1], ch[2]});
        }
        nm.n_verts = int64_t(nm.template_verts.size() / 3);
        nm.n_faces = F * 4;

        // regressor keeps its rows on the original vertices
        nm.j_regressor.assign(J * nm.n_verts, 0.f);
        for (int64_t j = 0; j < J; ++j)
            for (int64_t v = 0; v < V; ++v)
                nm.j_regressor[j * nm.n_verts + v] = m.j_regressor[j * V + v];

        for (auto& tpl : atlas.templates) {
            std::vector<int64_t> nf;
            std::vector<float> nuv;
            nf.reserve(tpl.faces.size() * 4);
            nuv.reserve(tpl.uv.size() * 4);
            for (size_t i = 0; i < tpl.faces.size(); ++i) {
                int64_t f = tpl.faces[i];
                const float* u = tpl.uv.data() + i * 6;
                float u0[2] = {u[0], u[1]}, u1[2] = {u[2], u[3]}, u2[2] = {u[4], u[5]};
                float m01[2] = {0.5f * (u0[0] + u1[0]), 0.5f * (u0[1] + u1[1])};
                float m12[2] = {0.5f * (u1[0] + u2[0]), 0.5f * (u1[1] + u2[1])};
                float m20[2] = {0.5f * (u2[0] + u0[0]), 0.5f * (u2[1] + u0[1])};
                const float* corners[4][3] = {
                    {u0, m01, m20}, {m01, u1, m12}, {m20, m12, u2}, {m01, m12, m20}};
                for (int k = 0; k < 4; ++k) {
                    nf.push_back(f * 4 + k);
                    for (int c = 0; c < 3; ++c)
                        nuv.insert(nuv.end(), {corners[k][c][0], corners[k][c][1]});
                }
            }
            tpl.faces = std::move(nf);
            tpl.uv = std::move(nuv);
        }
        atlas.model = std::move(nm);
        atlas.model.validate();
        ++atlas.subdiv_levels;
    }
}

namespace {

std::vector<Vec3> vertex_normals(const BodyModel& m) {
    std::vector<Vec3> normals(m.n_verts, Vec3{0, 0, 0});
    for (int64_t f = 0; f < m.n_faces; ++f) {
        Vec3 a = m.vertex(m.faces[f * 3]);
        Vec3 b = m.vertex(m.faces[f * 3 + 1]);
        Vec3 c = m.vertex(m.faces[f * 3 + 2]);
        Vec3 n = cross(b - a, c - a);  // area-weighted
        for (int k = 0; k < 3; ++k) normals[m.faces[f * 3 + k]] += n;
    }
    for (auto& n : normals) {
        float l = norm(n);
        if (l > 1e-12f) n = n / l;
    }
    return normals;
}

}  // namespace

SeedSet init_seeds(const TemplateAtlas& atlas) {
    const BodyModel& m = atlas.model;
    std::vector<Vec3> normals = vertex_normals(m);
    SeedSet set;
    for (int li = 0; li < kNumLabels; ++li) {
        const ComponentTemplate& tpl = atlas.templates[li];
        int64_t begin = int64_t(set.seeds.size());
        for (size_t i = 0; i < tpl.faces.size(); ++i) {
            int64_t f = tpl.faces[i];
            Vec3 p[3];
            for (int k = 0; k < 3; ++k) {
                int32_t v = m.faces[f * 3 + k];
                p[k] = m.vertex(v) + normals[v] * tpl.normal_offset;
            }
            Vec3 e01 = p[1] - p[0], e02 = p[2] - p[0];
            Vec3 n = cross(e01, e02);
            float area = 0.5f * norm(n);
            if (area < 1e-12f) {
                ++set.skipped_degenerate;
                continue;
            }
            GaussianSeed s;
            s.label = tpl.label;
            s.face = f;
            s.mu0 = (p[0] + p[1] + p[2]) / 3.f;
            Vec3 e = normalized(e01);
            Vec3 nn = normalized(n);
            s.r0 = Mat3::from_cols(e, cross(nn, e), nn);
            float mean_edge =
                (norm(p[1] - p[0]) + norm(p[2] - p[1]) + norm(p[0] - p[2])) / 3.f;
            s.s0 = {mean_edge / 2.f, mean_edge / 2.f, mean_edge / 8.f};
            s.uv[0] = (tpl.uv[i * 6] + tpl.uv[i * 6 + 2] + tpl.uv[i * 6 + 4]) / 3.f;
            s.uv[1] = (tpl.uv[i * 6 + 1] + tpl.uv[i * 6 + 3] + tpl.uv[i * 6 + 5]) / 3.f;
            set.seeds.push_back(std::move(s));
        }
        set.label_range[li] = {begin, int64_t(set.seeds.size())};
    }
    if (set.skipped_degenerate > 0)
        std::fprintf(stderr, "init_seeds: skipped %lld degenerate faces\n",
                     (long long)set.skipped_degenerate);
    return set;
}

void bake_offsets(SeedSet& set, const BodyModel& m) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(set.seeds.size()); ++i) {
        GaussianSeed& s = set.seeds[i];
        const int32_t* fv = &m.faces[s.face * 3];
        auto bake = [&](const std::vector<float>& dirs, int64_t nb, std::vector<float>& out) {
            out.assign(3 * nb, 0.f);
            for (int k = 0; k < 3; ++k) {
                int64_t v = fv[k];
                for (int c = 0; c < 3; ++c)
                    for (int64_t b = 0; b < nb; ++b)
                        out[c * nb + b] += dirs[(v * 3 + c) * nb + b] / 3.f;
            }
        };
        bake(m.shape_dirs, m.n_shape, s.shape_off);
        bake(m.expr_dirs, m.n_expr, s.expr_off);
        bake(m.pose_dirs, m.n_pose, s.pose_off);
    }
}

std::vector<float> SkinningField::lookup(const Vec3& p, bool* clamped) const {
    Vec3 c;
    bool cl = false;
    for (int a = 0; a < 3; ++a) {
        float x = (p[a] - bbox_min[a]) / step[a] - 0.5f;
        if (x < 0.f || x > float(res - 1)) cl = true;
        c[a] = std::min(std::max(x, 0.f), float(res - 1));
    }
    if (clamped) *clamped = cl;
    int x0 = std::min(int(c.x), res - 2 >= 0 ? res - 2 : 0);
    int y0 = std::min(int(c.y), res - 2 >= 0 ? res - 2 : 0);
    int z0 = std::min(int(c.z), res - 2 >= 0 ? res - 2 : 0);
    float fx = c.x - x0, fy = c.y - y0, fz = c.z - z0;
    std::vector<float> out(n_joints, 0.f);
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                float w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                if (w == 0.f) continue;
                int64_t cell =
                    (int64_t(z0 + dz) * res + (y0 + dy)) * res + (x0 + dx);
                const float* wp = weights.data() + cell * n_joints;
                for (int64_t j = 0; j < n_joints; ++j) out[j] += w * wp[j];
            }
    float sum = 0.f;
    for (float w : out) sum += w;
    if (sum > 0.f)
        for (auto& w : out) w /= sum;
    return out;
}

SkinningField build_skinning_field(const BodyModel& m, int res) {
    LAVT_CHECK(res >= 2, "build_skinning_field: res must be at least 2");
    SkinningField field;
    field.res = res;
    field.n_joints = m.n_joints;

    Vec3 lo{1e9f, 1e9f, 1e9f}, hi{-1e9f, -1e9f, -1e9f};
    for (int64_t v = 0; v < m.n_verts; ++v) {
        Vec3 p = m.vertex(v);
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    double edge_sum = 0.0;
    for (int64_t f = 0; f < m.n_faces; ++f) {
        Vec3 a = m.vertex(m.faces[f * 3]), b = m.vertex(m.faces[f * 3 + 1]),
             c = m.vertex(m.faces[f * 3 + 2]);
        edge_sum += norm(b - a) + norm(c - b) + norm(a - c);
    }
    float mean_edge = float(edge_sum / double(m.n_faces * 3));
    float bw = 2.f * mean_edge;
    float pad = std::max(2.f * bw, 0.03f);
    for (int a = 0; a < 3; ++a) {
        lo[a] -= pad;
        hi[a] += pad;
    }
    field.bbox_min = lo;
    field.bbox_max = hi;
    field.step = {(hi.x - lo.x) / res, (hi.y - lo.y) / res, (hi.z - lo.z) / res};

    // spatial hash over vertices for the k-nearest queries
    const int hres = std::max(8, res / 2);
    Vec3 hstep = {(hi.x - lo.x) / hres, (hi.y - lo.y) / hres, (hi.z - lo.z) / hres};
    std::vector<std::vector<int32_t>> buckets(size_t(hres) * hres * hres);
    auto bucket_of = [&](const Vec3& p) {
        int bx = std::min(hres - 1, std::max(0, int((p.x - lo.x) / hstep.x)));
        int by = std::min(hres - 1, std::max(0, int((p.y - lo.y) / hstep.y)));
        int bz = std::min(hres - 1, std::max(0, int((p.z - lo.z) / hstep.z)));
        return std::array<int, 3>{bx, by, bz};
    };
    for (int64_t v = 0; v < m.n_verts; ++v) {
        auto b = bucket_of(m.vertex(v));
        buckets[(size_t(b[2]) * hres + b[1]) * hres + b[0]].push_back(int32_t(v));
    }

    const int K = 8;
    const int64_t J = m.n_joints;
    field.weights.assign(int64_t(res) * res * res * J, 0.f);

#pragma omp parallel for collapse(2) schedule(dynamic, 4)
    for (int z = 0; z < res; ++z)
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                Vec3 p = {lo.x + (x + 0.5f) * field.step.x, lo.y + (y + 0.5f) * field.step.y,
                          lo.z + (z + 0.5f) * field.step.z};
                auto home = bucket_of(p);
                // expand rings until enough candidates, then one safety ring
                std::vector<std::pair<float, int32_t>> cand;
                for (int ring = 0; ring < hres; ++ring) {
                    size_t before = cand.size();
                    for (int bz = std::max(0, home[2] - ring);
                         bz <= std::min(hres - 1, home[2] + ring); ++bz)
                        for (int by = std::max(0, home[1] - ring);
                             by <= std::min(hres - 1, home[1] + ring); ++by)
                            for (int bx = std::max(0, home[0] - ring);
                                 bx <= std::min(hres - 1, home[0] + ring); ++bx) {
                                if (ring > 0 && std::abs(bx - home[0]) != ring &&
                                    std::abs(by - home[1]) != ring &&
                                    std::abs(bz - home[2]) != ring)
                                    continue;  // interior already visited
                                for (int32_t v :
                                     buckets[(size_t(bz) * hres + by) * hres + bx]) {
                                    Vec3 d = m.vertex(v) - p;
                                    cand.emplace_back(dot(d, d), v);
                                }
                            }
                    if (int(cand.size()) >= K && before >= size_t(K)) break;
                }
                std::partial_sort(cand.begin(),
                                  cand.begin() + std::min<size_t>(K, cand.size()), cand.end());
                int kn = int(std::min<size_t>(K, cand.size()));
                float d2min = kn > 0 ? cand[0].first : 0.f;
                float* wp = field.weights.data() + ((int64_t(z) * res + y) * res + x) * J;
                float sum = 0.f;
                for (int k = 0; k < kn; ++k) {
                    float fall = std::exp(-(cand[k].first - d2min) / (bw * bw));
                    const float* vw = m.lbs_weights.data() + int64_t(cand[k].second) * J;
                    for (int64_t j = 0; j < J; ++j) wp[j] += fall * vw[j];
                    sum += fall;
                }
                if (sum > 0.f)
                    for (int64_t j = 0; j < J; ++j) wp[j] /= sum;
            }
    return field;
}

void assign_weights(SeedSet& set, const BodyModel& m, const SkinningField& field) {
    const int64_t J = m.n_joints;
    int64_t clamped_count = 0;
#pragma omp parallel for schedule(static) reduction(+ : clamped_count)
    for (int64_t i = 0; i < int64_t(set.seeds.size()); ++i) {
        GaussianSeed& s = set.seeds[i];
        if (s.label == Label::body) {
            s.weights.assign(J, 0.f);
            for (int k = 0; k < 3; ++k) {
                int64_t v = m.faces[s.face * 3 + k];
                for (int64_t j = 0; j < J; ++j) s.weights[j] += m.lbs_weights[v * J + j] / 3.f;
            }
        } else {
            bool clamped = false;
            s.weights = field.lookup(s.mu0, &clamped);
            if (clamped) ++clamped_count;
        }
        float sum = 0.f;
        for (float w : s.weights) sum += w;
        LAVT_CHECK(sum > 0.f, "assign_weights: seed %lld has zero weight mass", (long long)i);
        for (auto& w : s.weights) w /= sum;
    }
    set.clamped_outside_grid = clamped_count;
    if (clamped_count > 0)
        std::fprintf(stderr, "assign_weights: %lld seeds outside the field grid were clamped\n",
                     (long long)clamped_count);
}

void save_template_bundle(const TemplateAtlas& atlas, const std::string& prefix) {
    Checkpoint c;
    nlohmann::json meta;
    meta["subdiv_levels"] = atlas.subdiv_levels;
    for (const auto& tpl : atlas.templates) {
        std::string name = label_name(tpl.label);
        std::vector<float> faces_f(tpl.faces.begin(), tpl.faces.end());
        c.put("tpl." + name + ".faces",
              Tensor::from_data({int64_t(tpl.faces.size())}, std::move(faces_f)));
        c.put("tpl." + name + ".uv",
              Tensor::from_data({int64_t(tpl.faces.size()), 3, 2}, tpl.uv));
        meta["components"][name] = {
            {"layer", tpl.layer},
            {"normal_offset", tpl.normal_offset},
            {"uv_box", tpl.uv_box},
            {"face_count", tpl.faces.size()},
        };
    }
    save_checkpoint(c, prefix + ".ckpt");
    std::ofstream js(prefix + ".json");
    LAVT_CHECK(js.good(), "save_template_bundle: cannot write %s.json", prefix.c_str());
    js << meta.dump(2) << "\n";
}

TemplateAtlas load_template_bundle(const BodyModel& model, const std::string& prefix) {
    Checkpoint c = load_checkpoint(prefix + ".ckpt");
    std::ifstream js(prefix + ".json");
    LAVT_CHECK(js.good(), "load_template_bundle: cannot read %s.json", prefix.c_str());
    nlohmann::json meta = nlohmann::json::parse(js);
    TemplateAtlas atlas;
    atlas.model = model;
    atlas.subdiv_levels = meta.value("subdiv_levels", 0);
    for (int i = 0; i < kNumLabels; ++i) {
        std::string name = label_name(Label(i));
        ComponentTemplate& tpl = atlas.templates[i];
        tpl.label = Label(i);
        const auto& cm = meta["components"][name];
        tpl.layer = cm["layer"];
        tpl.normal_offset = cm["normal_offset"];
        for (int k = 0; k < 4; ++k) tpl.uv_box[k] = cm["uv_box"][k];
        Tensor faces = c.get("tpl." + name + ".faces");
        tpl.faces.resize(faces.numel());
        for (int64_t j = 0; j < faces.numel(); ++j)
            tpl.faces[j] = int64_t(std::llround(faces.data()[j]));
        tpl.uv = c.get("tpl." + name + ".uv").vec();
        for (int64_t f : tpl.faces)
            LAVT_CHECK(f >= 0 && f < model.n_faces,
                       "load_template_bundle: face %lld outside model", (long long)f);
    }
    return atlas;
}

}  // namespace lavt
