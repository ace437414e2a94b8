#include <doctest.h>

#include <cmath>
#include <map>

#include "lavt/body_model.hpp"
#include "testing_util.hpp"

using namespace lavt;

namespace {
const BodyModel& toy() {
    static BodyModel m = make_toy_model(7);
    return m;
}
}  // namespace

TEST_CASE("toy model satisfies all structural invariants") {
    const BodyModel& m = toy();
    m.validate();
    CHECK(m.n_joints == 24);
    CHECK(m.n_verts > 600);
    CHECK(m.n_verts < 1200);
}

TEST_CASE("toy model is deterministic in the seed") {
    BodyModel a = make_toy_model(99);
    BodyModel b = make_toy_model(99);
    CHECK(a.template_verts == b.template_verts);
    CHECK(a.lbs_weights == b.lbs_weights);
    CHECK(a.pose_dirs == b.pose_dirs);
}

TEST_CASE("toy mesh is watertight: every edge shared by exactly two faces") {
    const BodyModel& m = toy();
    std::map<std::pair<int32_t, int32_t>, int> edges;
    for (int64_t f = 0; f < m.n_faces; ++f) {
        int32_t v[3] = {m.faces[f * 3], m.faces[f * 3 + 1], m.faces[f * 3 + 2]};
        for (int e = 0; e < 3; ++e) {
            int32_t a = v[e], b = v[(e + 1) % 3];
            edges[{std::min(a, b), std::max(a, b)}]++;
        }
    }
    for (const auto& [edge, count] : edges) CHECK(count == 2);
}

TEST_CASE("toy mesh faces wind outward") {
    const BodyModel& m = toy();
    // For capsule parts the outward direction at a face is away from the
    // nearest axis; sample a torso-band face and check the normal sign.
    int64_t outward = 0, total = 0;
    for (int64_t f = 0; f < m.n_faces; ++f) {
        Region r = static_cast<Region>(m.vertex_region[m.faces[f * 3]]);
        if (r != Region::torso) continue;
        Vec3 a = m.vertex(m.faces[f * 3]);
        Vec3 b = m.vertex(m.faces[f * 3 + 1]);
        Vec3 c = m.vertex(m.faces[f * 3 + 2]);
        Vec3 n = cross(b - a, c - a);
        Vec3 centroid = (a + b + c) / 3.f;
        Vec3 radial = {centroid.x, 0.f, centroid.z};  // torso axis is the y-axis
        if (dot(n, radial) > 0) ++outward;
        ++total;
    }
    CHECK(total > 0);
    CHECK(outward == total);
}

TEST_CASE("canonical mesh at rest equals the template exactly") {
    const BodyModel& m = toy();
    BodyParams p = BodyParams::rest(m);
    std::vector<float> v = canonical_mesh(m, p);
    CHECK(v == m.template_verts);
}

TEST_CASE("canonical mesh is linear: first basis vector adds the first shape column") {
    const BodyModel& m = toy();
    BodyParams p = BodyParams::rest(m);
    p.beta[0] = 1.f;
    std::vector<float> v = canonical_mesh(m, p);
    for (int64_t i = 0; i < m.n_verts * 3; ++i)
        CHECK(v[i] == doctest::Approx(m.template_verts[i] + m.shape_dirs[i * m.n_shape]).epsilon(1e-6));
}

TEST_CASE("canonical mesh is deterministic") {
    const BodyModel& m = toy();
    Rng rng(5);
    BodyParams p = BodyParams::rest(m);
    for (auto& b : p.beta) b = rng.normal();
    std::vector<float> a = canonical_mesh(m, p);
    std::vector<float> b = canonical_mesh(m, p);
    CHECK(a == b);
}

TEST_CASE("canonical mesh rejects coefficient-count mismatch") {
    const BodyModel& m = toy();
    BodyParams p = BodyParams::rest(m);
    p.beta.push_back(0.f);
    CHECK_THROWS(canonical_mesh(m, p));
}

TEST_CASE("skeleton with a one-hot regressor row lands on that vertex") {
    BodyModel m = toy();
    std::fill(m.j_regressor.begin(), m.j_regressor.begin() + m.n_verts, 0.f);
    m.j_regressor[42] = 1.f;
    std::vector<float> j = skeleton(m, std::vector<float>(m.n_shape, 0.f));
    CHECK(j[0] == m.template_verts[42 * 3 + 0]);
    CHECK(j[1] == m.template_verts[42 * 3 + 1]);
    CHECK(j[2] == m.template_verts[42 * 3 + 2]);
}

TEST_CASE("root joint sits at the centroid of the generator's pelvis ring") {
    const BodyModel& m = toy();
    // oracle: average the pelvis-region ring vertices lying at the root level
    Vec3 centroid{0, 0, 0};
    int count = 0;
    for (int64_t v = 0; v < m.n_verts; ++v) {
        if (static_cast<Region>(m.vertex_region[v]) != Region::pelvis) continue;
        Vec3 p = m.vertex(v);
        if (std::fabs(p.y) > 1e-5f) continue;
        centroid += p;
        ++count;
    }
    REQUIRE(count > 2);
    centroid = centroid / float(count);
    std::vector<float> j = skeleton(m, std::vector<float>(m.n_shape, 0.f));
    CHECK(std::fabs(j[0] - centroid.x) < 1e-5f);
    CHECK(std::fabs(j[1] - centroid.y) < 1e-5f);
    CHECK(std::fabs(j[2] - centroid.z) < 1e-5f);
}

TEST_CASE("rigid transforms at rest are all identity") {
    const BodyModel& m = toy();
    std::vector<float> beta(m.n_shape, 0.f), theta(m.n_joints * 3, 0.f);
    auto b = rigid_transforms(m, beta, theta);
    for (const auto& t : b)
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                CHECK(t(i, j) == doctest::Approx(i == j ? 1.f : 0.f).epsilon(1e-6));
}

TEST_CASE("root rotation propagates the same rotation to every joint transform") {
    const BodyModel& m = toy();
    std::vector<float> beta(m.n_shape, 0.f), theta(m.n_joints * 3, 0.f);
    theta[2] = 1.57079632679f;  // Rz(90 deg) on the root
    auto b = rigid_transforms(m, beta, theta);
    Mat3 rz = rodrigues({0, 0, 1.57079632679f});
    for (const auto& t : b)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) CHECK(t(i, j) == doctest::Approx(rz(i, j)).epsilon(1e-5));
}

TEST_CASE("elbow rotation matches two-link analytic forward kinematics") {
    const BodyModel& m = toy();
    std::vector<float> beta(m.n_shape, 0.f), theta(m.n_joints * 3, 0.f);
    const int elbow = 18, wrist = 20, hand = 22;
    float phi = 0.7f;
    theta[elbow * 3 + 2] = phi;  // bend about z
    auto b = rigid_transforms(m, beta, theta);
    std::vector<float> joints = skeleton(m, beta);
    auto jpos = [&](int j) { return Vec3{joints[j * 3], joints[j * 3 + 1], joints[j * 3 + 2]}; };

    // hand-computed: points rigidly attached to the forearm rotate about the
    // elbow; the chain below the wrist follows with the same rotation.
    Mat3 rz = rodrigues({0, 0, phi});
    for (int j : {wrist, hand}) {
        Vec3 expect = jpos(elbow) + rz * (jpos(j) - jpos(elbow));
        Vec3 got = b[j].transform_point(jpos(j));
        CHECK(norm(got - expect) < 1e-5f);
    }
}

TEST_CASE("lbs at rest pose reproduces the canonical mesh") {
    const BodyModel& m = toy();
    BodyParams p = BodyParams::rest(m);
    std::vector<float> canonical = canonical_mesh(m, p);
    std::vector<float> posed = lbs_mesh(m, p);
    CHECK(lavt::testing::max_abs_diff(posed, canonical) <= 1e-6);
}

TEST_CASE("lbs blends translations convexly") {
    // two joints, one translated by (1,0,0); weights (0.5, 0.5) move a vertex
    // by half the translation
    BodyModel m;
    m.n_verts = 3;
    m.n_faces = 1;
    m.n_joints = 2;
    m.n_shape = 1;
    m.n_expr = 1;
    m.n_pose = 9;
    m.template_verts = {0, 0, 0, 1, 0, 0, 0, 1, 0};
    m.faces = {0, 1, 2};
    m.shape_dirs.assign(3 * 3 * 1, 0.f);
    m.expr_dirs.assign(3 * 3 * 1, 0.f);
    m.pose_dirs.assign(3 * 3 * 9, 0.f);
    m.parents = {-1, 0};
    m.j_regressor.assign(2 * 3, 0.f);
    m.j_regressor[0 * 3 + 0] = 1.f;  // root at vertex 0
    m.j_regressor[1 * 3 + 1] = 1.f;  // child at vertex 1
    m.lbs_weights = {0.5f, 0.5f, 1.f, 0.f, 0.f, 1.f};
    m.vertex_region.assign(3, 0);
    m.validate();

    // translating the root while keeping the child fixed is not expressible
    // with rotations only; instead rotate the child 180 deg about the root's
    // y-axis? Simpler: verify the convex-blend property directly through B.
    BodyParams p = BodyParams::rest(m);
    p.theta[1 * 3 + 2] = 3.14159265358979f;  // child joint spins pi about z
    std::vector<float> posed = lbs_mesh(m, p);
    // vertex 2 is fully bound to the child joint at (1,0,0): rotating pi about
    // z maps (0,1,0) -> (2,-1,0)
    CHECK(posed[2 * 3 + 0] == doctest::Approx(2.f).epsilon(1e-5));
    CHECK(posed[2 * 3 + 1] == doctest::Approx(-1.f).epsilon(1e-5));
    // vertex 0 blends identity and that rotation equally: midpoint of (0,0,0)
    // and (2,0,0) is (1,0,0)
    CHECK(posed[0 * 3 + 0] == doctest::Approx(1.f).epsilon(1e-5));
    CHECK(posed[0 * 3 + 1] == doctest::Approx(0.f).epsilon(1e-5));
}

TEST_CASE("lbs commutes with a global rigid motion") {
    const BodyModel& m = toy();
    Rng rng(11);
    BodyParams p = BodyParams::rest(m);
    for (auto& b : p.beta) b = 0.3f * rng.normal();
    p.theta[18 * 3 + 2] = 0.4f;
    p.theta[4 * 3 + 0] = 0.3f;
    std::vector<float> posed = lbs_mesh(m, p);

    BodyParams pg = p;
    // rotating the root applies the rigid motion about the root joint
    pg.theta[0] = 0.f;
    pg.theta[1] = 1.2f;
    pg.theta[2] = 0.f;
    std::vector<float> posed_g = lbs_mesh(m, pg);

    std::vector<float> joints = skeleton(m, p.beta);
    Vec3 root{joints[0], joints[1], joints[2]};
    Mat3 ry = rodrigues({0.f, 1.2f, 0.f});
    for (int64_t v = 0; v < m.n_verts; ++v) {
        Vec3 q{posed[v * 3], posed[v * 3 + 1], posed[v * 3 + 2]};
        Vec3 expect = root + ry * (q - root);
        Vec3 got{posed_g[v * 3], posed_g[v * 3 + 1], posed_g[v * 3 + 2]};
        CHECK(norm(got - expect) < 1e-5f);
    }
}

TEST_CASE("blendshape application is additive in beta") {
    const BodyModel& m = toy();
    Rng rng(13);
    BodyParams p1 = BodyParams::rest(m), p2 = BodyParams::rest(m), p12 = BodyParams::rest(m);
    for (int64_t i = 0; i < m.n_shape; ++i) {
        p1.beta[i] = rng.normal() * 0.5f;
        p2.beta[i] = rng.normal() * 0.5f;
        p12.beta[i] = p1.beta[i] + p2.beta[i];
    }
    auto v1 = canonical_mesh(m, p1);
    auto v2 = canonical_mesh(m, p2);
    auto v12 = canonical_mesh(m, p12);
    for (int64_t i = 0; i < m.n_verts * 3; ++i) {
        float expect = v1[i] + v2[i] - m.template_verts[i];
        CHECK(std::fabs(v12[i] - expect) < 1e-5f);
    }
}

TEST_CASE("body model round-trips through the checkpoint format") {
    const BodyModel& m = toy();
    std::string path = "/tmp/lavt_test_model.ckpt";
    save_body_model(m, path);
    BodyModel loaded = load_body_model(path);
    CHECK(loaded.template_verts == m.template_verts);
    CHECK(loaded.faces == m.faces);
    CHECK(loaded.lbs_weights == m.lbs_weights);
    CHECK(loaded.parents == m.parents);
    CHECK(loaded.vertex_region == m.vertex_region);
    CHECK(loaded.n_shape == m.n_shape);
}
