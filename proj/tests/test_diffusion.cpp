#include <doctest.h>

#include <cmath>

#include "lavt/adam.hpp"
#include "lavt/diffusion.hpp"
#include "testing_util.hpp"

using namespace lavt;
using namespace lavt::testing;

namespace {

// denoiser that knows the clean signal: v = (alpha x_t - x0) / sigma
struct OracleDenoiser : Denoiser {
    Tensor x0;
    const Schedule& s;
    OracleDenoiser(Tensor x0_, const Schedule& s_) : x0(std::move(x0_)), s(s_) {}
    Tensor predict_v(const Tensor& x_t, float t) override {
        float a = s.alpha(t), sg = std::max(s.sigma(t), 1e-12f);
        return mul(sub(mul(x_t, a), x0), 1.f / sg);
    }
};

// v = theta * x_t with a trainable scalar theta
struct ScalarDenoiser : Denoiser {
    Tensor theta = Tensor::scalar(0.3f);
    Tensor predict_v(const Tensor& x_t, float t) override {
        (void)t;
        return mul(x_t, theta);
    }
    std::vector<Tensor> parameters() override { return {theta}; }
};

}  // namespace

TEST_CASE("schedule: alpha^2 + sigma^2 = 1 at all 1000 steps, monotone") {
    Schedule s = Schedule::linear();
    REQUIRE(s.steps == 1000);
    for (int i = 0; i < s.steps; ++i) {
        float a = s.alpha_t[i], sg = s.sigma_t[i];
        CHECK(std::fabs(a * a + sg * sg - 1.f) <= 1e-6f);
        if (i > 0) {
            CHECK(s.alpha_t[i] < s.alpha_t[i - 1]);
            CHECK(s.sigma_t[i] > s.sigma_t[i - 1]);
        }
    }
}

TEST_CASE("schedule endpoint: alpha(1) evaluated from the beta sequence") {
    Schedule s = Schedule::linear();
    // oracle: recompute the cumulative product in double
    double cum = 1.0;
    for (int i = 0; i < 1000; ++i) {
        double b = 1e-4 + (0.02 - 1e-4) * double(i) / 999.0;
        cum *= 1.0 - b;
    }
    CHECK(std::fabs(double(s.alpha(1.f)) - std::sqrt(cum)) < 1e-6);
    CHECK(s.alpha(1.f) <= 0.07f);  // alpha x0 is negligible at the endpoint
}

TEST_CASE("forward diffuse at t=0 stays close to x0; t outside [0,1] rejected") {
    Rng rng(71);
    Schedule s = Schedule::linear();
    Tensor x0 = Tensor::randn({4, 4}, rng);
    Tensor eps = Tensor::randn({4, 4}, rng);
    Tensor xt = forward_diffuse(x0, eps, 0.f, s);
    for (int64_t i = 0; i < x0.numel(); ++i)
        CHECK(std::fabs(xt.data()[i] - x0.data()[i]) <=
              1e-2f * std::fabs(eps.data()[i]) + 1e-4f);
    CHECK_THROWS(forward_diffuse(x0, eps, 1.5f, s));
}

TEST_CASE("forward diffuse variance matches sigma^2 via Monte-Carlo") {
    Rng rng(72);
    Schedule s = Schedule::linear();
    float t = 0.35f;
    Tensor x0 = Tensor::zeros({64});
    double sq = 0;
    int64_t n = 3000;
    for (int64_t k = 0; k < n; ++k) {
        Tensor eps = Tensor::randn({64}, rng);
        Tensor xt = forward_diffuse(x0, eps, t, s);
        for (float v : xt.vec()) sq += double(v) * v;
    }
    double var = sq / double(n * 64);
    double expect = double(s.sigma(t)) * s.sigma(t);
    CHECK(std::fabs(var - expect) / expect < 0.01);
}

TEST_CASE("v-target algebra: sigma=0 gives eps; the balanced point gives (eps-x0)/sqrt2") {
    Rng rng(73);
    Tensor x0 = Tensor::randn({5}, rng);
    Tensor eps = Tensor::randn({5}, rng);
    Tensor v0 = v_target(x0, eps, 1.f, 0.f);
    for (int64_t i = 0; i < 5; ++i) CHECK(v0.data()[i] == eps.data()[i]);

    float r = std::sqrt(0.5f);
    Tensor vb = v_target(x0, eps, r, r);
    for (int64_t i = 0; i < 5; ++i)
        CHECK(vb.data()[i] == doctest::Approx((eps.data()[i] - x0.data()[i]) * r).epsilon(1e-6));
}

TEST_CASE("v round-trip identity holds across random timesteps") {
    Rng rng(74);
    Schedule s = Schedule::linear();
    for (int trial = 0; trial < 20; ++trial) {
        float t = rng.uniform();
        Tensor x0 = Tensor::randn({6, 3}, rng);
        Tensor eps = Tensor::randn({6, 3}, rng);
        Tensor xt = forward_diffuse(x0, eps, t, s);
        Tensor v = v_target(x0, eps, t, s);
        Tensor rec = recover_x0(xt, v, t, s);
        for (int64_t i = 0; i < x0.numel(); ++i)
            CHECK(std::fabs(rec.data()[i] - x0.data()[i]) <= 1e-5f);
    }
}

TEST_CASE("perfect denoiser yields exactly zero diffusion loss") {
    Rng rng(75);
    Schedule s = Schedule::linear();
    Tensor x0 = Tensor::randn({8, 8}, rng);
    Tensor eps = Tensor::randn({8, 8}, rng);
    OracleDenoiser d(x0, s);
    Tensor loss = diffusion_loss(x0, d, 0.4f, eps, s);
    CHECK(loss.item() <= 1e-8f);
}

TEST_CASE("zero-output denoiser at the balanced point matches the hand evaluation") {
    struct ZeroDenoiser : Denoiser {
        Tensor predict_v(const Tensor& x_t, float) override { return mul(x_t, 0.f); }
    };
    // hand-built one-step schedule with alpha = sigma = sqrt(1/2)
    Schedule s;
    s.steps = 1;
    s.beta = {0.5f};
    s.alpha_bar = {0.5f};
    s.alpha_t = {std::sqrt(0.5f)};
    s.sigma_t = {std::sqrt(0.5f)};

    Tensor x0 = Tensor::from_data({2}, {0.8f, -0.4f});
    Tensor eps = Tensor::from_data({2}, {0.3f, 0.9f});
    ZeroDenoiser d;
    Tensor loss = diffusion_loss(x0, d, 0.f, eps, s);
    // by hand: x_t = a x0 + s eps; x0_hat = a x_t; w = 1
    double a = std::sqrt(0.5), sg = a;
    double l = 0;
    for (int i = 0; i < 2; ++i) {
        double xt = a * x0.data()[i] + sg * eps.data()[i];
        double err = a * xt - x0.data()[i];
        l += 0.5 * err * err;
    }
    CHECK(loss.item() == doctest::Approx(float(l)).epsilon(1e-5));
}

TEST_CASE("diffusion loss is quadratic: doubling the error quadruples it") {
    struct ZeroDenoiser : Denoiser {
        Tensor predict_v(const Tensor& x_t, float) override { return mul(x_t, 0.f); }
    };
    Schedule s = Schedule::linear();
    Tensor x0 = Tensor::from_data({3}, {0.5f, -0.2f, 0.1f});
    Tensor eps = Tensor::zeros({3});
    ZeroDenoiser d;
    float t = 0.6f;
    float l1 = diffusion_loss(x0, d, t, eps, s).item();
    float l2 = diffusion_loss(mul(x0, 2.f), d, t, eps, s).item();
    CHECK(l2 == doctest::Approx(4.f * l1).epsilon(1e-4));
}

TEST_CASE("diffusion loss gradients match finite differences on a tiny plane") {
    Rng rng(76);
    Schedule s = Schedule::linear();
    Tensor x0 = Tensor::randn({2, 2, 2}, rng);
    Tensor eps = Tensor::randn({2, 2, 2}, rng);
    float t = 0.45f;
    ScalarDenoiser d;
    d.theta.set_requires_grad(true);
    x0.set_requires_grad(true);
    {
        Tape tape;
        Tensor loss = diffusion_loss(x0, d, t, eps, s);
        tape.backward(loss);
    }
    REQUIRE(x0.has_grad());
    REQUIRE(d.theta.has_grad());

    float a = s.alpha(t), sg = s.sigma(t);
    double w = std::min(std::pow(double(a) / sg, 1.0), 1e4);
    auto oracle = [&](const Tensor& x, double theta) {
        double l = 0;
        for (int64_t i = 0; i < x.numel(); ++i) {
            double xt = double(a) * x.data()[i] + double(sg) * eps.data()[i];
            double x0h = double(a) * xt - double(sg) * (theta * xt);
            double err = x0h - x.data()[i];
            l += 0.5 * w * err * err;
        }
        return l;
    };
    auto fd = finite_diff([&](const Tensor& x) { return oracle(x, d.theta.item()); },
                          x0.clone());
    CHECK(grad_match_fraction(x0.grad(), fd, 1e-3) == 1.0);
    double fd_theta =
        (oracle(x0, d.theta.item() + 1e-3) - oracle(x0, d.theta.item() - 1e-3)) / 2e-3;
    CHECK(rel_err(d.theta.grad()[0], fd_theta) < 1e-3);
}

TEST_CASE("one-step sampling with a perfect denoiser returns the known plane") {
    Rng rng(77);
    Schedule s = Schedule::linear(1, 0.3f, 0.3f);
    Tensor target = Tensor::randn({kPlaneChannels, kPlaneRes, kPlaneRes * 3}, rng, 0.5f);
    OracleDenoiser d(target, s);
    Rng srng(5);
    Tensor sample = ddpm_sample(d, s, 1, srng);
    double m = max_abs_diff(sample.vec(), target.vec());
    CHECK(m <= 1e-4);
}

TEST_CASE("sampling is deterministic in the seed") {
    Rng rng(78);
    ToyDenoiser d(rng);
    Schedule s = Schedule::linear(50, 1e-4f, 0.02f);
    Rng a(99), b(99), c(100);
    Tensor sa = ddpm_sample(d, s, 10, a);
    Tensor sb = ddpm_sample(d, s, 10, b);
    Tensor sc = ddpm_sample(d, s, 10, c);
    CHECK(sa.vec() == sb.vec());
    CHECK(sa.vec() != sc.vec());
}

TEST_CASE("toy denoiser trains: diffusion loss decreases on one plane") {
    Rng rng(79);
    ToyDenoiser d(rng);
    d.mark_trainable();
    Schedule s = Schedule::linear();
    Tensor plane = Tensor::randn({kPlaneChannels, kPlaneRes, kPlaneRes * 3}, rng, 0.5f);
    std::vector<AdamState> st(d.parameters().size());
    AdamConfig cfg;
    cfg.lr = 1e-3f;
    float first = 0.f, last = 0.f;
    Rng erng(80);
    for (int it = 0; it < 8; ++it) {
        Tensor eps = Tensor::randn(plane.shape(), erng);
        Tape tape;
        Tensor loss = diffusion_loss(plane, d, 0.5f, eps, s);
        if (it == 0) first = loss.item();
        last = loss.item();
        tape.backward(loss);
        auto params = d.parameters();
        for (size_t i = 0; i < params.size(); ++i) adam_step(params[i], st[i], cfg);
    }
    CHECK(last < first);
}

TEST_CASE("layer concat and split are exact inverses with the documented layout") {
    Rng rng(81);
    std::array<Tensor, kNumLayers> layers;
    for (int l = 0; l < kNumLayers; ++l)
        layers[l] = Tensor::full({kPlaneChannels, kPlaneRes, kPlaneRes}, float(l + 1));
    Tensor plane = concat_layers(layers);
    CHECK((plane.shape() == Shape{kPlaneChannels, kPlaneRes, kPlaneRes * 3}));
    // layer k occupies columns [128k, 128(k+1))
    for (int l = 0; l < kNumLayers; ++l)
        for (int x = 0; x < kPlaneRes; ++x)
            CHECK(plane.data()[size_t(l) * kPlaneRes + x] == float(l + 1));
    auto back = split_layers(plane);
    for (int l = 0; l < kNumLayers; ++l) CHECK(back[l].vec() == layers[l].vec());

    std::array<Tensor, kNumLayers> rnd;
    for (int l = 0; l < kNumLayers; ++l)
        rnd[l] = Tensor::randn({kPlaneChannels, kPlaneRes, kPlaneRes}, rng);
    auto round = split_layers(concat_layers(rnd));
    for (int l = 0; l < kNumLayers; ++l) CHECK(round[l].vec() == rnd[l].vec());

    CHECK_THROWS(split_layers(Tensor::zeros({12, 64, 64})));
}
