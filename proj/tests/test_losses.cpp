#include <doctest.h>

#include <cmath>

#include "lavt/losses.hpp"
#include "testing_util.hpp"

using namespace lavt;
using namespace lavt::testing;

namespace {

constexpr int H = 12, W = 12;

ViewTruth blank_truth() {
    ViewTruth t;
    t.rgb = Tensor::zeros({H, W, 3});
    t.fg_mask = Tensor::zeros({H, W});
    for (int i = 0; i < kNumLabels; ++i) {
        t.comp_mask[i] = Tensor::zeros({H, W});
        t.class_mask[i] = Tensor::zeros({H, W});
    }
    t.seg_onehot = Tensor::zeros({H, W, 5});
    return t;
}

RenderSet renders_matching(const ViewTruth& t) {
    RenderSet r;
    r.full_rgb = t.rgb.clone();
    r.full_alpha = t.fg_mask.clone();
    for (int i = 0; i < kNumLabels; ++i) {
        r.comp_rgb[i] = t.rgb.clone();
        r.comp_alpha[i] = t.comp_mask[i].clone();
    }
    r.seg = t.seg_onehot.clone();
    r.body_sil_detached = Tensor::zeros({H, W});
    return r;
}

}  // namespace

TEST_CASE("recon loss is zero when renders exactly match the truth") {
    Rng rng(61);
    ViewTruth t = blank_truth();
    t.rgb = Tensor::rand_uniform({H, W, 3}, rng, 0.f, 1.f);
    t.fg_mask = Tensor::rand_uniform({H, W}, rng, 0.f, 1.f);
    RenderSet r = renders_matching(t);
    LossWeights w;
    LossBreakdown bd;
    Tensor loss = recon_loss(r, t, w, 0.1f, nullptr, &bd);
    CHECK(loss.item() == 0.f);
    CHECK(bd.get("color") == 0.f);
    CHECK(bd.get("seg") == 0.f);
}

TEST_CASE("full-white versus full-black color term hits the huber linear branch") {
    ViewTruth t = blank_truth();  // black truth
    RenderSet r = renders_matching(t);
    r.full_rgb = Tensor::full({H, W, 3}, 1.f);  // white render
    LossWeights w;
    w.mask = w.seg = w.per = 0.f;
    LossBreakdown bd;
    Tensor loss = recon_loss(r, t, w, 0.1f, nullptr, &bd);
    // delta*(1 - delta/2) * 18 = 0.095 * 18 = 1.71 per pixel-channel
    CHECK(loss.item() == doctest::Approx(1.71f).epsilon(1e-5));
}

TEST_CASE("missing component render is rejected") {
    ViewTruth t = blank_truth();
    RenderSet r = renders_matching(t);
    r.comp_rgb[2] = Tensor();
    LossWeights w;
    CHECK_THROWS(recon_loss(r, t, w, 0.1f, nullptr, nullptr));
}

TEST_CASE("recon loss decreases along its negative gradient") {
    Rng rng(62);
    ViewTruth t = blank_truth();
    t.rgb = Tensor::rand_uniform({H, W, 3}, rng, 0.f, 1.f);
    t.fg_mask = Tensor::full({H, W}, 1.f);
    for (int i = 0; i < kNumLabels; ++i) {
        t.comp_mask[i] = Tensor::rand_uniform({H, W}, rng, 0.f, 1.f);
        t.class_mask[i] = Tensor::full({H, W}, 1.f);
    }
    RenderSet r = renders_matching(t);
    r.full_rgb = Tensor::rand_uniform({H, W, 3}, rng, 0.f, 1.f);
    r.full_rgb.set_requires_grad(true);
    LossWeights w;
    float before, after;
    {
        Tape tape;
        Tensor loss = recon_loss(r, t, w, 0.1f, nullptr, nullptr);
        before = loss.item();
        tape.backward(loss);
    }
    const auto& g = r.full_rgb.grad();
    for (int64_t i = 0; i < r.full_rgb.numel(); ++i) r.full_rgb.data()[i] -= 0.01f * g[i];
    after = recon_loss(r, t, w, 0.1f, nullptr, nullptr).item();
    CHECK(after < before);
}

TEST_CASE("perceptual hook contributes only when present") {
    struct ConstHook : PerceptualHook {
        Tensor operator()(const Tensor&, const Tensor&) override { return Tensor::scalar(2.f); }
    };
    ViewTruth t = blank_truth();
    RenderSet r = renders_matching(t);
    LossWeights w;
    LossBreakdown bd0, bd1;
    Tensor l0 = recon_loss(r, t, w, 0.1f, nullptr, &bd0);
    ConstHook hook;
    Tensor l1 = recon_loss(r, t, w, 0.1f, &hook, &bd1);
    CHECK(bd0.get("per") == 0.f);
    CHECK(bd1.get("per") == doctest::Approx(0.05f * 2.f));
    CHECK(l1.item() - l0.item() == doctest::Approx(0.1f));
}

TEST_CASE("maskin loss: zero inside the foreground, area fraction outside") {
    Tensor fg = Tensor::zeros({H, W});
    Tensor sil = Tensor::zeros({H, W});
    // body inside the foreground
    for (int64_t i = 0; i < H * W / 2; ++i) {
        fg.data()[i] = 1.f;
        sil.data()[i] = 1.f;
    }
    CHECK(maskin_loss(sil, fg, 5.f, nullptr).item() == 0.f);

    // violation with a known area fraction: 1/4 of the image
    Tensor sil2 = sil.clone();
    for (int64_t i = H * W / 2; i < H * W / 2 + H * W / 4; ++i) sil2.data()[i] = 1.f;
    LossBreakdown bd;
    Tensor loss = maskin_loss(sil2, fg, 5.f, &bd);
    CHECK(loss.item() == doctest::Approx(5.f * 0.25f).epsilon(1e-6));
    CHECK(bd.get("maskin") == doctest::Approx(loss.item()));
}

TEST_CASE("skin loss: exact on constant fields, zero on empty masks") {
    Vec3 cskin{0.8f, 0.6f, 0.5f};
    Tensor body = Tensor::zeros({H, W, 3});
    for (int64_t i = 0; i < H * W; ++i) {
        body.data()[i * 3 + 0] = 0.9f;
        body.data()[i * 3 + 1] = 0.5f;
        body.data()[i * 3 + 2] = 0.5f;
    }
    Tensor oc = Tensor::full({H, W}, 1.f);
    float delta = 0.1f;
    Tensor loss = skin_loss(body, oc, cskin, 0.5f, delta, nullptr);
    // per-channel huber of (0.1, -0.1, 0.0) averaged over channels
    float expect = 0.5f * (0.1f * (0.1f - 0.05f) + 0.1f * (0.1f - 0.05f) + 0.f) / 3.f;
    CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-5));

    Tensor empty = Tensor::zeros({H, W});
    CHECK(skin_loss(body, empty, cskin, 0.5f, delta, nullptr).item() == 0.f);

    // body equal to the skin color over the mask
    for (int64_t i = 0; i < H * W; ++i)
        for (int c = 0; c < 3; ++c) body.data()[i * 3 + c] = cskin[c];
    CHECK(skin_loss(body, oc, cskin, 0.5f, delta, nullptr).item() == 0.f);
}

TEST_CASE("skin color estimate averages the hand region and falls back when empty") {
    Tensor sil = Tensor::zeros({H, W});
    Tensor rgb = Tensor::zeros({H, W, 3});
    sil.data()[5] = 1.f;
    sil.data()[9] = 0.9f;
    rgb.data()[5 * 3] = 0.4f;
    rgb.data()[9 * 3] = 0.8f;
    bool fell_back = false;
    Vec3 c = skin_color_estimate(sil, rgb, kSkinFallback, &fell_back);
    CHECK_FALSE(fell_back);
    CHECK(c.x == doctest::Approx(0.6f));

    Vec3 f = skin_color_estimate(Tensor::zeros({H, W}), rgb, kSkinFallback, &fell_back);
    CHECK(fell_back);
    CHECK(f.x == doctest::Approx(0.8f));
}

TEST_CASE("occlusion mask is the exterior union clipped to the foreground") {
    ViewTruth t = blank_truth();
    t.fg_mask.data()[0] = 1.f;
    t.fg_mask.data()[1] = 1.f;
    t.comp_mask[size_t(Label::top)].data()[0] = 1.f;   // inside fg
    t.comp_mask[size_t(Label::hair)].data()[2] = 1.f;  // outside fg
    t.comp_mask[size_t(Label::body)].data()[1] = 1.f;  // body never counts
    Tensor oc = occlusion_mask(t);
    CHECK(oc.data()[0] == 1.f);
    CHECK(oc.data()[1] == 0.f);
    CHECK(oc.data()[2] == 0.f);
}

TEST_CASE("reg loss: zero for zero offsets and constant maps; linear in lambdas") {
    AttributeMaps maps;
    for (int l = 0; l < kNumLayers; ++l) {
        maps.offset[l] = Tensor::full({3, 16, 16}, 0.2f);
        maps.opacity[l] = Tensor::full({1, 16, 16}, 0.7f);
        maps.color[l] = Tensor::full({3, 16, 16}, 0.5f);
        maps.rot[l] = Tensor::full({3, 16, 16}, 0.5f);
        maps.scale[l] = Tensor::full({3, 16, 16}, 0.5f);
    }
    std::array<Tensor, kNumLabels> offsets;
    for (auto& o : offsets) o = Tensor::zeros({4, 3});
    CHECK(reg_loss(maps, offsets, 5.f, 0.5f, nullptr).item() == 0.f);

    offsets[0].data()[0] = 0.3f;
    offsets[0].data()[1] = -0.4f;
    LossBreakdown bd;
    Tensor loss = reg_loss(maps, offsets, 5.f, 0.5f, &bd);
    float expect = 5.f * (0.3f * 0.3f + 0.4f * 0.4f) / 20.f;  // 20 seeds total
    CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-5));

    LossBreakdown bd2;
    Tensor loss2 = reg_loss(maps, offsets, 10.f, 1.0f, &bd2);
    CHECK(bd2.get("offset") == doctest::Approx(2.f * bd.get("offset")));
    CHECK(bd2.get("smooth") == doctest::Approx(2.f * bd.get("smooth")));
}

TEST_CASE("every lambda scales its breakdown term linearly") {
    Rng rng(63);
    ViewTruth t = blank_truth();
    t.rgb = Tensor::rand_uniform({H, W, 3}, rng, 0.f, 1.f);
    t.fg_mask = Tensor::rand_uniform({H, W}, rng, 0.f, 1.f);
    for (int i = 0; i < kNumLabels; ++i) {
        t.comp_mask[i] = Tensor::rand_uniform({H, W}, rng, 0.f, 1.f);
        t.class_mask[i] = Tensor::rand_uniform({H, W}, rng, 0.f, 1.f);
    }
    t.seg_onehot = Tensor::rand_uniform({H, W, 5}, rng, 0.f, 1.f);
    RenderSet r = renders_matching(t);
    r.full_rgb = Tensor::rand_uniform({H, W, 3}, rng, 0.f, 1.f);
    r.seg = Tensor::rand_uniform({H, W, 5}, rng, 0.f, 1.f);

    LossWeights w1;
    LossWeights w2;
    w2.color *= 2.f;
    w2.seg *= 2.f;
    LossBreakdown b1, b2;
    recon_loss(r, t, w1, 0.1f, nullptr, &b1);
    recon_loss(r, t, w2, 0.1f, nullptr, &b2);
    CHECK(b2.get("color") == doctest::Approx(2.f * b1.get("color")));
    CHECK(b2.get("seg") == doctest::Approx(2.f * b1.get("seg")));
    CHECK(b2.get("mask") == doctest::Approx(b1.get("mask")));
}
