#include <doctest.h>

#include <cmath>

#include "lavt/feature_plane.hpp"
#include "testing_util.hpp"

using namespace lavt;
using namespace lavt::testing;

namespace {

const TemplateAtlas& atlas1() {
    static TemplateAtlas a = [] {
        TemplateAtlas a = default_atlas(make_toy_model(7));
        subdivide(a, 1);
        return a;
    }();
    return a;
}

const SeedSet& seeds1() {
    static SeedSet s = [] {
        SeedSet s = init_seeds(atlas1());
        bake_offsets(s, atlas1().model);
        SkinningField f = build_skinning_field(atlas1().model, 32);
        assign_weights(s, atlas1().model, f);
        return s;
    }();
    return s;
}

AttributeMaps constant_maps(float off, float opa, float col, float rot, float scl) {
    AttributeMaps m;
    for (int l = 0; l < kNumLayers; ++l) {
        m.offset[l] = Tensor::full({3, kPlaneRes, kPlaneRes}, off);
        m.opacity[l] = Tensor::full({1, kPlaneRes, kPlaneRes}, opa);
        m.color[l] = Tensor::full({3, kPlaneRes, kPlaneRes}, col);
        m.rot[l] = Tensor::full({3, kPlaneRes, kPlaneRes}, rot);
        m.scale[l] = Tensor::full({3, kPlaneRes, kPlaneRes}, scl);
    }
    return m;
}

}  // namespace

TEST_CASE("decode of a zero plane yields exactly zero offsets") {
    Rng rng(31);
    DecoderParams params = DecoderParams::init(rng);
    Tensor plane = empty_plane();
    AttributeMaps maps = decode(plane, params, true);
    for (int l = 0; l < kNumLayers; ++l)
        for (int64_t i = 0; i < maps.offset[l].numel(); ++i)
            CHECK(std::fabs(maps.offset[l].data()[i]) <= 1e-4f);
}

TEST_CASE("decoded opacity lies in [0,1] for a random plane") {
    Rng rng(32);
    DecoderParams params = DecoderParams::init(rng);
    Tensor plane = Tensor::randn({kPlaneChannels, kPlaneRes, kPlaneRes * 3}, rng);
    AttributeMaps maps = decode(plane, params, true);
    for (int l = 0; l < kNumLayers; ++l)
        for (int64_t i = 0; i < maps.opacity[l].numel(); ++i) {
            CHECK(maps.opacity[l].data()[i] >= 0.f);
            CHECK(maps.opacity[l].data()[i] <= 1.f);
        }
}

TEST_CASE("decode is deterministic for fixed parameters") {
    Rng rng(33);
    DecoderParams params = DecoderParams::init(rng);
    Tensor plane = Tensor::randn({kPlaneChannels, kPlaneRes, kPlaneRes * 3}, rng, 0.5f);
    AttributeMaps a = decode(plane, params, false);
    AttributeMaps b = decode(plane, params, false);
    for (int l = 0; l < kNumLayers; ++l) {
        CHECK(a.color[l].vec() == b.color[l].vec());
        CHECK(a.offset[l].vec() == b.offset[l].vec());
    }
}

TEST_CASE("decode rejects a wrongly shaped plane") {
    Rng rng(34);
    DecoderParams params = DecoderParams::init(rng);
    Tensor bad = Tensor::zeros({12, 64, 64});
    CHECK_THROWS(decode(bad, params, false));
}

TEST_CASE("extraction at neutral residuals reproduces the seed initialization") {
    const SeedSet& seeds = seeds1();
    AttributeMaps maps = constant_maps(0.f, 0.7f, 0.3f, 0.5f, 0.5f);
    GaussianBatch b = extract_gaussians(maps, seeds);
    REQUIRE(b.size() == int64_t(seeds.seeds.size()));
    for (int64_t i = 0; i < b.size(); i += 499) {
        const GaussianSeed& s = seeds.seeds[i];
        for (int c = 0; c < 3; ++c) {
            CHECK(b.mu[i * 3 + c] == doctest::Approx(s.mu0[c]).epsilon(1e-5));
            CHECK(b.scale[i * 3 + c] == doctest::Approx(s.s0[c]).epsilon(1e-5));
        }
        for (int k = 0; k < 9; ++k)
            CHECK(b.rot[i * 9 + k] == doctest::Approx(s.r0.m[k]).epsilon(1e-5));
        CHECK(b.alpha[i] == doctest::Approx(0.7f));
        CHECK(b.label[i] == uint8_t(s.label));
    }
}

TEST_CASE("composed rotations stay orthonormal with det +1") {
    Rng rng(35);
    const SeedSet& seeds = seeds1();
    AttributeMaps maps = constant_maps(0.f, 0.5f, 0.5f, 0.f, 0.5f);
    for (int l = 0; l < kNumLayers; ++l)
        maps.rot[l] = Tensor::rand_uniform({3, kPlaneRes, kPlaneRes}, rng, 0.f, 1.f);
    GaussianBatch b = extract_gaussians(maps, seeds);
    for (int64_t i = 0; i < b.size(); i += 997) {
        Mat3 r = b.rotation(i);
        Mat3 rtr = r.transposed() * r;
        for (int ii = 0; ii < 3; ++ii)
            for (int jj = 0; jj < 3; ++jj)
                CHECK(std::fabs(rtr(ii, jj) - (ii == jj ? 1.f : 0.f)) <= 1e-5f);
        CHECK(std::fabs(r.det() - 1.f) <= 1e-5f);
    }
}

TEST_CASE("compose_rotation gradient matches finite differences") {
    Rng rng(36);
    int64_t n = 5;
    std::vector<Mat3> r0(n);
    for (auto& r : r0) r = rodrigues({rng.normal(), rng.normal(), rng.normal()});
    Tensor dr = Tensor::rand_uniform({n, 3}, rng, 0.15f, 0.85f);
    Tensor w = Tensor::randn({n, 9}, rng);
    dr.set_requires_grad(true);
    {
        Tape tape;
        Tensor loss = sum(mul(compose_rotation(dr, r0), w));
        tape.backward(loss);
    }
    auto fd = finite_diff([&](const Tensor& t) {
        const float kHalfPi = 1.57079632679489661923f;
        double loss = 0;
        for (int64_t i = 0; i < n; ++i) {
            Vec3 axis{(t.data()[i * 3] - 0.5f) * kHalfPi, (t.data()[i * 3 + 1] - 0.5f) * kHalfPi,
                      (t.data()[i * 3 + 2] - 0.5f) * kHalfPi};
            Mat3 r = r0[i] * rodrigues(axis);
            for (int k = 0; k < 9; ++k) loss += double(r.m[k]) * w.data()[i * 9 + k];
        }
        return loss;
    }, dr.clone());
    CHECK(grad_match_fraction(dr.grad(), fd, 2e-3) == 1.0);
}

TEST_CASE("layer separation: a loss on one component only touches its layer columns") {
    Rng rng(37);
    DecoderParams params = DecoderParams::init(rng);
    Tensor plane = Tensor::randn({kPlaneChannels, kPlaneRes, kPlaneRes * 3}, rng, 0.3f);
    plane.set_requires_grad(true);
    const SeedSet& seeds = seeds1();
    Tape tape;
    AttributeMaps maps = decode(plane, params, false);
    ExtractedAvatar av = extract_attributes(maps, seeds);
    // hair lives in layer 1: columns [128, 256)
    Tensor loss = add(sum(av.components[size_t(Label::hair)].color),
                      sum(av.components[size_t(Label::hair)].mu));
    tape.backward(loss);
    const auto& g = plane.grad();
    for (int64_t c = 0; c < kPlaneChannels; ++c)
        for (int64_t y = 0; y < kPlaneRes; ++y)
            for (int64_t x = 0; x < kPlaneRes * 3; ++x) {
                float gv = g[(c * kPlaneRes + y) * (kPlaneRes * 3) + x];
                if (x < kPlaneRes || x >= 2 * kPlaneRes) CHECK(gv == 0.f);
            }
}

namespace {

// Double-precision reference of decode (eval-mode) + extraction, used as the
// finite-difference oracle for the plane gradient. Computes the same weighted
// scalar over mu/color/scale/alpha that the taped loss uses.
struct DecodeOracle {
    const DecoderParams& p;
    const SeedSet& seeds;
    std::array<std::vector<float>, kNumLabels> wmu, wcol, wsc, walpha;

    static double silu_d(double x) { return x / (1.0 + std::exp(-x)); }
    static double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

    // conv 3x3 same padding at one output location
    static double conv_at(const std::vector<double>& in, int C, int H, int W,
                          const Tensor& w, const Tensor& b, int k, int y, int x) {
        double acc = b.data()[k];
        for (int c = 0; c < C; ++c)
            for (int dy = 0; dy < 3; ++dy)
                for (int dx = 0; dx < 3; ++dx) {
                    int iy = y + dy - 1, ix = x + dx - 1;
                    if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                    acc += in[(size_t(c) * H + iy) * W + ix] *
                           double(w.data()[((k * C + c) * 3 + dy) * 3 + dx]);
                }
        return acc;
    }

    double operator()(const Tensor& plane) const {
        const int H = kPlaneRes, W = kPlaneRes;
        double loss = 0;
        for (int layer = 0; layer < kNumLayers; ++layer) {
            bool wanted = false;
            for (int li = 0; li < kNumLabels; ++li)
                if (label_layer(Label(li)) == layer && !wmu[li].empty()) wanted = true;
            if (!wanted) continue;
            std::vector<double> xg(size_t(6) * H * W), xt(size_t(6) * H * W);
            for (int c = 0; c < 12; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x) {
                        double v = std::tanh(
                            double(plane.data()[(size_t(c) * H + y) * (W * 3) + layer * W + x]));
                        if (c < 6)
                            xg[(size_t(c) * H + y) * W + x] = v;
                        else
                            xt[(size_t(c - 6) * H + y) * W + x] = v;
                    }
            auto hidden = [&](const std::vector<double>& in, const Tensor& cw, const Tensor& cb,
                              const BatchNorm2d& bn) {
                std::vector<double> h(size_t(kDecoderHidden) * H * W);
                for (int k = 0; k < kDecoderHidden; ++k) {
                    double iv = 1.0 / std::sqrt(double(bn.running_var.data()[k]) + bn.eps);
                    double m = bn.running_mean.data()[k];
                    double gam = bn.gamma.data()[k], bet = bn.beta.data()[k];
                    for (int y = 0; y < H; ++y)
                        for (int x = 0; x < W; ++x) {
                            double v = conv_at(in, 6, H, W, cw, cb, k, y, x);
                            h[(size_t(k) * H + y) * W + x] = silu_d(gam * (v - m) * iv + bet);
                        }
                }
                return h;
            };
            std::vector<double> hg = hidden(xg, p.dg_conv_w, p.dg_conv_b, p.dg_bn);
            std::vector<double> ht = hidden(xt, p.dt_conv_w, p.dt_conv_b, p.dt_bn);

            auto head_at = [&](const std::vector<double>& h, const Tensor& w, const Tensor& b,
                               int k, double yy, double xx, bool sig) {
                // bilinear sample of the head output at continuous coords
                int x0 = std::min(int(xx), W - 2), y0 = std::min(int(yy), H - 2);
                double fx = xx - x0, fy = yy - y0;
                double v00 = conv_at(h, kDecoderHidden, H, W, w, b, k, y0, x0);
                double v01 = conv_at(h, kDecoderHidden, H, W, w, b, k, y0, x0 + 1);
                double v10 = conv_at(h, kDecoderHidden, H, W, w, b, k, y0 + 1, x0);
                double v11 = conv_at(h, kDecoderHidden, H, W, w, b, k, y0 + 1, x0 + 1);
                if (sig) {
                    v00 = sigmoid_d(v00);
                    v01 = sigmoid_d(v01);
                    v10 = sigmoid_d(v10);
                    v11 = sigmoid_d(v11);
                }
                return (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                       fy * ((1 - fx) * v10 + fx * v11);
            };

            for (int li = 0; li < kNumLabels; ++li) {
                if (label_layer(Label(li)) != layer) continue;
                if (wmu[li].empty()) continue;
                auto [lo, hi] = seeds.label_range[li];
                for (int64_t i = lo; i < hi; ++i) {
                    const GaussianSeed& s = seeds.seeds[i];
                    double xx = double(std::min(std::max(s.uv[0], 0.f), 1.f)) * (W - 1);
                    double yy = double(std::min(std::max(s.uv[1], 0.f), 1.f)) * (H - 1);
                    int64_t j = i - lo;
                    for (int c = 0; c < 3; ++c) {
                        double off = head_at(hg, p.dg_offset_w, p.dg_offset_b, c, yy, xx, false);
                        loss += (s.mu0[c] + 0.1 * off) * double(wmu[li][j * 3 + c]);
                        double col = head_at(ht, p.dt_color_w, p.dt_color_b, c, yy, xx, true);
                        loss += col * double(wcol[li][j * 3 + c]);
                        double ds = head_at(ht, p.dt_scale_w, p.dt_scale_b, c, yy, xx, true);
                        loss += s.s0[c] * 2.0 * ds * double(wsc[li][j * 3 + c]);
                    }
                    double opa = head_at(hg, p.dg_opacity_w, p.dg_opacity_b, 0, yy, xx, true);
                    loss += opa * double(walpha[li][j]);
                }
            }
        }
        return loss;
    }
};

}  // namespace

TEST_CASE("plane gradient through decode and extraction matches finite differences") {
    Rng rng(38);
    DecoderParams params = DecoderParams::init(rng);
    Tensor plane = Tensor::randn({kPlaneChannels, kPlaneRes, kPlaneRes * 3}, rng, 0.3f);
    const SeedSet& seeds = seeds1();

    DecodeOracle oracle{params, seeds, {}, {}, {}, {}};
    Rng wrng(39);
    for (int i : {int(Label::hair), int(Label::shoes)}) {
        int64_t n = seeds.count(Label(i));
        oracle.wmu[i].resize(n * 3);
        oracle.wcol[i].resize(n * 3);
        oracle.wsc[i].resize(n * 3);
        oracle.walpha[i].resize(n);
        for (auto& v : oracle.wmu[i]) v = wrng.uniform(-1.f, 1.f);
        for (auto& v : oracle.wcol[i]) v = wrng.uniform(-1.f, 1.f);
        for (auto& v : oracle.wsc[i]) v = wrng.uniform(-1.f, 1.f);
        for (auto& v : oracle.walpha[i]) v = wrng.uniform(-1.f, 1.f);
    }

    plane.set_requires_grad(true);
    float taped_loss;
    {
        Tape tape;
        AttributeMaps maps = decode(plane, params, false);
        ExtractedAvatar av = extract_attributes(maps, seeds);
        Tensor total;
        for (int i : {int(Label::hair), int(Label::shoes)}) {
            int64_t n = seeds.count(Label(i));
            Tensor t = sum(mul(av.components[i].mu, Tensor::from_data({n, 3}, oracle.wmu[i])));
            t = add(t, sum(mul(av.components[i].color,
                               Tensor::from_data({n, 3}, oracle.wcol[i]))));
            t = add(t, sum(mul(av.components[i].scale,
                               Tensor::from_data({n, 3}, oracle.wsc[i]))));
            t = add(t,
                    sum(mul(av.components[i].alpha, Tensor::from_data({n}, oracle.walpha[i]))));
            total = total.defined() ? add(total, t) : t;
        }
        taped_loss = total.item();
        tape.backward(total);
    }
    const auto& g = plane.grad();

    // the f32 pipeline agrees with the double-precision oracle
    CHECK(std::fabs(double(taped_loss) - oracle(plane)) <
          1e-4 * std::max(1.0, std::fabs(oracle(plane))));

    double gmax = 0;
    for (float v : g) gmax = std::max(gmax, std::fabs(double(v)));
    Rng prng(40);
    Tensor probe = plane.clone();
    int checked = 0, ok = 0;
    int guard = 0;
    while (checked < 12 && ++guard < 4000) {
        int64_t idx = prng.uniform_int(plane.numel());
        int64_t col = idx % (kPlaneRes * 3);
        if (col < kPlaneRes || col >= 2 * kPlaneRes) continue;  // layer-1 columns only
        if (std::fabs(g[idx]) < 0.02 * gmax) continue;
        float orig = probe.data()[idx];
        float h = 1e-3f;
        float xp = orig + h, xm = orig - h;
        probe.data()[idx] = xp;
        double fp = oracle(probe);
        probe.data()[idx] = xm;
        double fm = oracle(probe);
        probe.data()[idx] = orig;
        double fd = (fp - fm) / (double(xp) - double(xm));
        ++checked;
        if (rel_err(g[idx], fd, 1e-3 * gmax) < 1e-3) ++ok;
    }
    REQUIRE(checked == 12);
    CHECK(ok == checked);
}

TEST_CASE("decoder parameters round-trip through their checkpoint") {
    Rng rng(41);
    DecoderParams p = DecoderParams::init(rng);
    p.save("/tmp/lavt_test_decoders.ckpt");
    DecoderParams q = DecoderParams::load("/tmp/lavt_test_decoders.ckpt");
    CHECK(q.dg_conv_w.vec() == p.dg_conv_w.vec());
    CHECK(q.dt_rot_w.vec() == p.dt_rot_w.vec());
    CHECK(q.dg_bn.running_var.vec() == p.dg_bn.running_var.vec());
}
