#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "lavt/template_atlas.hpp"
#include "testing_util.hpp"

using namespace lavt;

namespace {

const TemplateAtlas& atlas1() {
    static TemplateAtlas a = [] {
        TemplateAtlas a = default_atlas(make_toy_model(7));
        subdivide(a, 1);
        return a;
    }();
    return a;
}

// single planar triangle wrapped as a one-face body template
TemplateAtlas tiny_triangle_atlas() {
    BodyModel m;
    m.n_verts = 3;
    m.n_faces = 1;
    m.n_joints = 2;
    m.n_shape = 1;
    m.n_expr = 1;
    m.n_pose = 9;
    m.template_verts = {0, 0, 0, 1, 0, 0, 0, 1, 0};
    m.faces = {0, 1, 2};
    m.shape_dirs.assign(9, 0.f);
    m.expr_dirs.assign(9, 0.f);
    m.pose_dirs.assign(27, 0.f);
    m.parents = {-1, 0};
    m.j_regressor = {1, 0, 0, 0, 1, 0};
    m.lbs_weights = {1, 0, 1, 0, 1, 0};
    m.vertex_region.assign(3, 0);
    TemplateAtlas a;
    a.model = m;
    for (int i = 0; i < kNumLabels; ++i) {
        a.templates[i].label = Label(i);
        a.templates[i].layer = label_layer(Label(i));
    }
    a.templates[0].faces = {0};
    a.templates[0].uv = {0.1f, 0.1f, 0.9f, 0.1f, 0.1f, 0.9f};
    a.templates[0].uv_box = {0, 0, 1, 1};
    return a;
}

double face_area(const BodyModel& m, int64_t f) {
    Vec3 a = m.vertex(m.faces[f * 3]), b = m.vertex(m.faces[f * 3 + 1]),
         c = m.vertex(m.faces[f * 3 + 2]);
    return 0.5 * norm(cross(b - a, c - a));
}

}  // namespace

TEST_CASE("default atlas returns five templates with unique labels") {
    TemplateAtlas a = default_atlas(make_toy_model(7));
    std::set<Label> labels;
    for (const auto& t : a.templates) labels.insert(t.label);
    CHECK(labels.size() == 5);
    for (const auto& t : a.templates) CHECK(t.layer == label_layer(t.label));
}

TEST_CASE("layer-1 hair and shoe UV boxes are disjoint") {
    const TemplateAtlas& a = atlas1();
    const auto& hair = a.templates[size_t(Label::hair)].uv_box;
    const auto& shoes = a.templates[size_t(Label::shoes)].uv_box;
    bool overlap = hair[0] < shoes[2] && shoes[0] < hair[2] && hair[1] < shoes[3] &&
                   shoes[1] < hair[3];
    CHECK_FALSE(overlap);
}

TEST_CASE("every body face appears in the body template exactly once") {
    TemplateAtlas a = default_atlas(make_toy_model(7));
    const auto& body = a.templates[size_t(Label::body)];
    std::set<int64_t> seen(body.faces.begin(), body.faces.end());
    CHECK(int64_t(seen.size()) == int64_t(body.faces.size()));
    CHECK(int64_t(body.faces.size()) == a.model.n_faces);
}

TEST_CASE("all template UVs lie inside the unit square and their boxes") {
    const TemplateAtlas& a = atlas1();
    for (const auto& t : a.templates)
        for (size_t i = 0; i + 1 < t.uv.size(); i += 2) {
            CHECK(t.uv[i] >= 0.f);
            CHECK(t.uv[i] <= 1.f);
            CHECK(t.uv[i] >= t.uv_box[0]);
            CHECK(t.uv[i] <= t.uv_box[2]);
            CHECK(t.uv[i + 1] >= t.uv_box[1]);
            CHECK(t.uv[i + 1] <= t.uv_box[3]);
        }
}

TEST_CASE("subdivide with zero levels is the identity") {
    TemplateAtlas a = default_atlas(make_toy_model(7));
    int64_t faces_before = a.model.n_faces;
    subdivide(a, 0);
    CHECK(a.model.n_faces == faces_before);
    CHECK(a.subdiv_levels == 0);
}

TEST_CASE("one subdivision level quadruples face counts") {
    TemplateAtlas a = default_atlas(make_toy_model(7));
    int64_t f0 = a.model.n_faces;
    std::array<size_t, kNumLabels> tf0;
    for (int i = 0; i < kNumLabels; ++i) tf0[i] = a.templates[i].faces.size();
    subdivide(a, 1);
    CHECK(a.model.n_faces == 4 * f0);
    for (int i = 0; i < kNumLabels; ++i) CHECK(a.templates[i].faces.size() == 4 * tf0[i]);
}

TEST_CASE("child-face areas sum to the parent area") {
    TemplateAtlas parent = default_atlas(make_toy_model(7));
    TemplateAtlas child = parent;
    subdivide(child, 1);
    for (int64_t f = 0; f < parent.model.n_faces; f += 97) {
        double pa = face_area(parent.model, f);
        double ca = 0;
        for (int k = 0; k < 4; ++k) ca += face_area(child.model, f * 4 + k);
        CHECK(std::fabs(pa - ca) <= 1e-6);
    }
}

TEST_CASE("subdivided mesh stays watertight") {
    const TemplateAtlas& a = atlas1();
    std::map<std::pair<int32_t, int32_t>, int> edges;
    for (int64_t f = 0; f < a.model.n_faces; ++f)
        for (int e = 0; e < 3; ++e) {
            int32_t x = a.model.faces[f * 3 + e], y = a.model.faces[f * 3 + (e + 1) % 3];
            edges[{std::min(x, y), std::max(x, y)}]++;
        }
    for (const auto& [e, c] : edges) CHECK(c == 2);
}

TEST_CASE("init_seeds: unit right triangle centroid and tangent frame") {
    TemplateAtlas a = tiny_triangle_atlas();
    SeedSet s = init_seeds(a);
    REQUIRE(s.seeds.size() == 1);
    const GaussianSeed& seed = s.seeds[0];
    CHECK(seed.mu0.x == doctest::Approx(1.f / 3));
    CHECK(seed.mu0.y == doctest::Approx(1.f / 3));
    CHECK(seed.mu0.z == doctest::Approx(0.f));
    // orthonormality and det +1
    Mat3 rtr = seed.r0.transposed() * seed.r0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(rtr(i, j) == doctest::Approx(i == j ? 1.f : 0.f).epsilon(1e-5));
    CHECK(seed.r0.det() == doctest::Approx(1.f).epsilon(1e-5));
}

TEST_CASE("init_seeds skips degenerate faces") {
    TemplateAtlas a = tiny_triangle_atlas();
    // collapse the triangle
    a.model.template_verts = {0, 0, 0, 0, 0, 0, 0, 0, 0};
    SeedSet s = init_seeds(a);
    CHECK(s.seeds.empty());
    CHECK(s.skipped_degenerate == 1);
}

TEST_CASE("seed count equals non-degenerate face count and frames are orthonormal") {
    const TemplateAtlas& a = atlas1();
    SeedSet s = init_seeds(a);
    size_t expected = 0;
    for (const auto& t : a.templates) expected += t.faces.size();
    CHECK(s.seeds.size() + size_t(s.skipped_degenerate) == expected);
    for (size_t i = 0; i < s.seeds.size(); i += 211) {
        const Mat3& r = s.seeds[i].r0;
        Mat3 rtr = r.transposed() * r;
        for (int ii = 0; ii < 3; ++ii)
            for (int jj = 0; jj < 3; ++jj)
                CHECK(std::fabs(rtr(ii, jj) - (ii == jj ? 1.f : 0.f)) < 1e-5f);
        CHECK(s.seeds[i].s0.x > 0.f);
        CHECK(s.seeds[i].s0.z > 0.f);
    }
}

TEST_CASE("component seed sets partition the avatar seed set") {
    const TemplateAtlas& a = atlas1();
    SeedSet s = init_seeds(a);
    int64_t covered = 0;
    for (int i = 0; i < kNumLabels; ++i) {
        auto [b, e] = s.label_range[i];
        covered += e - b;
        for (int64_t k = b; k < e; ++k) CHECK(s.seeds[k].label == Label(i));
    }
    CHECK(covered == int64_t(s.seeds.size()));
}

TEST_CASE("seeds of different components never share a layer+uv texel pair") {
    const TemplateAtlas& a = atlas1();
    SeedSet s = init_seeds(a);
    // quantize uv to half texels of the 128 atlas per layer
    std::map<std::tuple<int, int, int>, Label> taken;
    for (const auto& seed : s.seeds) {
        int layer = label_layer(seed.label);
        int qu = int(seed.uv[0] * 127.f * 2.f);
        int qv = int(seed.uv[1] * 127.f * 2.f);
        auto key = std::make_tuple(layer, qu, qv);
        auto it = taken.find(key);
        if (it != taken.end()) CHECK(it->second == seed.label);
        taken[key] = seed.label;
    }
}

TEST_CASE("bake_offsets: zero blendshapes bake to zero") {
    TemplateAtlas a = tiny_triangle_atlas();
    SeedSet s = init_seeds(a);
    bake_offsets(s, a.model);
    for (float v : s.seeds[0].shape_off) CHECK(v == 0.f);
}

TEST_CASE("bake_offsets: identical vertex rows bake to the row itself") {
    TemplateAtlas a = tiny_triangle_atlas();
    for (int64_t v = 0; v < 3; ++v)
        for (int c = 0; c < 3; ++c) a.model.shape_dirs[v * 3 + c] = float(c + 1);
    SeedSet s = init_seeds(a);
    bake_offsets(s, a.model);
    for (int c = 0; c < 3; ++c)
        CHECK(s.seeds[0].shape_off[c] == doctest::Approx(float(c + 1)).epsilon(1e-6));
}

TEST_CASE("baked shape offsets match the mesh-deformation oracle") {
    const TemplateAtlas& a = atlas1();
    SeedSet s = init_seeds(a);
    bake_offsets(s, a.model);
    Rng rng(3);
    std::vector<float> beta(a.model.n_shape);
    for (auto& b : beta) b = rng.normal() * 0.5f;

    // oracle: deform the mesh, recompute face centroids, subtract rest centroids
    std::vector<float> deformed = a.model.template_verts;
    for (int64_t b = 0; b < a.model.n_shape; ++b)
        for (int64_t i = 0; i < a.model.n_verts * 3; ++i)
            deformed[i] += beta[b] * a.model.shape_dirs[i * a.model.n_shape + b];

    auto [lo, hi] = s.label_range[size_t(Label::body)];
    for (int64_t i = lo; i < hi; i += 173) {
        const GaussianSeed& seed = s.seeds[i];
        Vec3 rest{0, 0, 0}, def{0, 0, 0};
        for (int k = 0; k < 3; ++k) {
            int64_t v = a.model.faces[seed.face * 3 + k];
            rest += a.model.vertex(v);
            def += Vec3{deformed[v * 3], deformed[v * 3 + 1], deformed[v * 3 + 2]};
        }
        Vec3 expect = (def - rest) / 3.f;
        Vec3 got{0, 0, 0};
        for (int c = 0; c < 3; ++c)
            for (int64_t b = 0; b < a.model.n_shape; ++b)
                got[c] += seed.shape_off[c * a.model.n_shape + b] * beta[b];
        CHECK(norm(got - expect) <= 1e-6f);
    }
}

TEST_CASE("skinning field: falloff dominance at an isolated vertex") {
    BodyModel m;
    m.n_verts = 4;
    m.n_faces = 1;
    m.n_joints = 2;
    m.n_shape = 1;
    m.n_expr = 1;
    m.n_pose = 9;
    // one isolated vertex many falloff-bandwidths from a tiny distant triangle
    m.template_verts = {0, 0, 0, 2, 0, 0, 2.05f, 0, 0, 2, 0.05f, 0.05f};
    m.faces = {1, 2, 3};
    m.shape_dirs.assign(4 * 3, 0.f);
    m.expr_dirs.assign(4 * 3, 0.f);
    m.pose_dirs.assign(4 * 27, 0.f);
    m.parents = {-1, 0};
    m.j_regressor = {1, 0, 0, 0, 0, 1, 0, 0};
    m.lbs_weights = {1, 0, 0, 1, 0, 1, 0, 1};  // isolated vertex is joint-0 bound
    m.vertex_region.assign(4, 0);
    SkinningField f = build_skinning_field(m, 32);
    auto w = f.lookup({0, 0, 0});
    CHECK(w[0] >= 0.999f);
    CHECK(w[1] <= 1e-3f);
}

TEST_CASE("skinning field cells all sum to one") {
    BodyModel m = make_toy_model(7);
    SkinningField f = build_skinning_field(m, 16);
    for (int64_t cell = 0; cell < int64_t(f.res) * f.res * f.res; ++cell) {
        float s = 0.f;
        for (int64_t j = 0; j < f.n_joints; ++j) s += f.weights[cell * f.n_joints + j];
        CHECK(std::fabs(s - 1.f) < 1e-3f);
    }
}

TEST_CASE("field lookup near the surface tracks barycentric weights") {
    const BodyModel& m = atlas1().model;
    SkinningField f = build_skinning_field(m, 64);
    const int64_t J = m.n_joints;
    for (int64_t face = 0; face < m.n_faces; face += 487) {
        Vec3 c = (m.vertex(m.faces[face * 3]) + m.vertex(m.faces[face * 3 + 1]) +
                  m.vertex(m.faces[face * 3 + 2])) /
                 3.f;
        auto lw = f.lookup(c);
        double l1 = 0;
        for (int64_t j = 0; j < J; ++j) {
            float bary = (m.lbs_weights[m.faces[face * 3] * J + j] +
                          m.lbs_weights[m.faces[face * 3 + 1] * J + j] +
                          m.lbs_weights[m.faces[face * 3 + 2] * J + j]) /
                         3.f;
            l1 += std::fabs(lw[j] - bary);
        }
        CHECK(l1 < 0.1);
    }
}

TEST_CASE("assign_weights: one-hot region stays one-hot, all seeds sum to one") {
    TemplateAtlas a = tiny_triangle_atlas();
    SeedSet s = init_seeds(a);
    SkinningField f = build_skinning_field(a.model, 8);
    assign_weights(s, a.model, f);
    CHECK(s.seeds[0].weights[0] == doctest::Approx(1.f));
    CHECK(s.seeds[0].weights[1] == doctest::Approx(0.f));

    const TemplateAtlas& big = atlas1();
    SeedSet sb = init_seeds(big);
    SkinningField fb = build_skinning_field(big.model, 32);
    assign_weights(sb, big.model, fb);
    for (size_t i = 0; i < sb.seeds.size(); i += 307) {
        float sum = 0.f;
        for (float w : sb.seeds[i].weights) sum += w;
        CHECK(sum == doctest::Approx(1.f).epsilon(1e-4));
    }
}

TEST_CASE("exterior seed at a cell center gets that cell's weights") {
    BodyModel m = make_toy_model(7);
    SkinningField f = build_skinning_field(m, 16);
    int cx = 8, cy = 8, cz = 8;
    Vec3 p = {f.bbox_min.x + (cx + 0.5f) * f.step.x, f.bbox_min.y + (cy + 0.5f) * f.step.y,
              f.bbox_min.z + (cz + 0.5f) * f.step.z};
    auto w = f.lookup(p);
    int64_t cell = (int64_t(cz) * 16 + cy) * 16 + cx;
    for (int64_t j = 0; j < f.n_joints; ++j)
        CHECK(w[j] == doctest::Approx(f.weights[cell * f.n_joints + j]).epsilon(1e-4));
}

TEST_CASE("template bundle round-trips through checkpoint plus sidecar") {
    const TemplateAtlas& a = atlas1();
    save_template_bundle(a, "/tmp/lavt_test_bundle");
    TemplateAtlas b = load_template_bundle(a.model, "/tmp/lavt_test_bundle");
    CHECK(b.subdiv_levels == a.subdiv_levels);
    for (int i = 0; i < kNumLabels; ++i) {
        CHECK(b.templates[i].faces == a.templates[i].faces);
        CHECK(b.templates[i].uv == a.templates[i].uv);
        CHECK(b.templates[i].layer == a.templates[i].layer);
    }
}
