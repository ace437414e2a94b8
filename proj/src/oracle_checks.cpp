#include "lavt/oracle_checks.hpp"

#include <cmath>

#include "lavt/diffusion.hpp"
#include "lavt/renderer.hpp"

namespace lavt {

namespace {

GaussianBatch random_scene(int n, Rng& rng) {
    GaussianBatch b;
    for (int i = 0; i < n; ++i) {
        b.mu.insert(b.mu.end(), {rng.uniform(-0.8f, 0.8f), rng.uniform(-0.8f, 0.8f),
                                 rng.uniform(1.5f, 6.f)});
        Mat3 rot = rodrigues({rng.normal() * 0.6f, rng.normal() * 0.6f, rng.normal() * 0.6f});
        b.rot.insert(b.rot.end(), rot.m.begin(), rot.m.end());
        b.scale.insert(b.scale.end(), {rng.uniform(0.02f, 0.15f), rng.uniform(0.02f, 0.15f),
                                       rng.uniform(0.02f, 0.15f)});
        b.alpha.push_back(rng.uniform(0.1f, 1.f));
        b.color.insert(b.color.end(), {rng.uniform(), rng.uniform(), rng.uniform()});
        b.label.push_back(uint8_t(rng.uniform_int(5)));
    }
    return b;
}

Camera check_camera(int size) {
    Camera cam;
    cam.fx = cam.fy = 1.25f * float(size);
    cam.cx = cam.cy = 0.5f * float(size);
    cam.width = cam.height = size;
    cam.world_to_cam = Mat4::identity();
    return cam;
}

}  // namespace

CheckResult check_renderer_oracle(int scenes, int gaussians, int image_size, uint64_t seed,
                                  double tolerance) {
    Rng rng(seed);
    Camera cam = check_camera(image_size);
    double worst = 0.0;
    for (int s = 0; s < scenes; ++s) {
        GaussianBatch b = random_scene(gaussians, rng);
        Vec3 bg{rng.uniform(), rng.uniform(), rng.uniform()};
        RenderOutput tiled = render(b, cam, bg, RenderMode::color);
        RenderOutput ref = render_reference(b, cam, bg, RenderMode::color, true);
        for (int64_t i = 0; i < tiled.color.numel(); ++i)
            worst = std::max(worst,
                             std::fabs(double(tiled.color.data()[i]) - ref.color.data()[i]));
        for (int64_t i = 0; i < tiled.alpha.numel(); ++i)
            worst = std::max(worst,
                             std::fabs(double(tiled.alpha.data()[i]) - ref.alpha.data()[i]));
    }
    CheckResult r;
    r.pass = worst <= tolerance;
    r.detail = strf("max |tiled - reference| = %.3g over %d scenes (tolerance %.1g)", worst,
                    scenes, tolerance);
    return r;
}

CheckResult check_renderer_gradients(int scenes, int gaussians, int image_size, uint64_t seed,
                                     double tolerance, double required_fraction) {
    Rng rng(seed);
    Camera cam = check_camera(image_size);
    int64_t ok = 0, total = 0;

    for (int s = 0; s < scenes; ++s) {
        GaussianBatch b = random_scene(gaussians, rng);
        std::vector<float> wc(size_t(image_size) * image_size * 3);
        std::vector<float> wa(size_t(image_size) * image_size);
        for (auto& w : wc) w = rng.uniform(-1.f, 1.f);
        for (auto& w : wa) w = rng.uniform(-1.f, 1.f);

        auto loss = [&](const GaussianBatch& bb) {
            RenderOutput out = render(bb, cam, {0.1f, 0.2f, 0.3f}, RenderMode::color);
            double acc = 0;
            for (size_t i = 0; i < wc.size(); ++i)
                acc += double(out.color.data()[i]) * wc[i];
            for (size_t i = 0; i < wa.size(); ++i)
                acc += double(out.alpha.data()[i]) * wa[i];
            return acc;
        };

        RenderOutput fwd = render(b, cam, {0.1f, 0.2f, 0.3f}, RenderMode::color, true);
        RenderGrads g = render_backward(
            fwd, Tensor::from_data({image_size, image_size, 3}, wc),
            Tensor::from_data({image_size, image_size}, wa), Tensor());

        const double h = 1e-3;
        auto rel = [](double a, double fd) {
            return std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 5e-3});
        };
        auto probe = [&](std::vector<float>& param, const std::vector<float>& analytic) {
            for (size_t i = 0; i < param.size(); ++i) {
                float orig = param[i];
                float xp = orig + float(h), xm = orig - float(h);
                param[i] = xp;
                double fp = loss(b);
                param[i] = xm;
                double fm = loss(b);
                param[i] = orig;
                double fd = (fp - fm) / (double(xp) - double(xm));
                ++total;
                if (rel(analytic[i], fd) < tolerance) ++ok;
            }
        };
        probe(b.mu, g.mu);
        probe(b.scale, g.scale);
        probe(b.alpha, g.alpha);
        probe(b.color, g.color);

        for (int64_t gi = 0; gi < b.size(); ++gi) {
            Mat3 r0 = b.rotation(gi);
            for (int axis = 0; axis < 3; ++axis) {
                Vec3 e{axis == 0 ? 1.f : 0.f, axis == 1 ? 1.f : 0.f, axis == 2 ? 1.f : 0.f};
                auto with_rot = [&](float t) {
                    GaussianBatch bb = b;
                    Mat3 rr = rodrigues(e * t) * r0;
                    for (int k = 0; k < 9; ++k) bb.rot[gi * 9 + k] = rr.m[k];
                    return loss(bb);
                };
                double fd = (with_rot(float(h)) - with_rot(-float(h))) / (2 * h);
                Mat3 sk;
                sk.m = {0, -e.z, e.y, e.z, 0, -e.x, -e.y, e.x, 0};
                Mat3 dr = sk * r0;
                double analytic = 0;
                for (int k = 0; k < 9; ++k) analytic += double(g.rot[gi * 9 + k]) * dr.m[k];
                ++total;
                if (rel(analytic, fd) < tolerance) ++ok;
            }
        }
    }
    CheckResult r;
    double frac = total ? double(ok) / double(total) : 0.0;
    r.pass = frac >= required_fraction;
    r.detail = strf("%.1f%% of %lld sampled parameters within %.0e relative error",
                    100.0 * frac, (long long)total, tolerance);
    return r;
}

CheckResult check_diffusion_algebra(uint64_t seed) {
    Rng rng(seed);
    Schedule s = Schedule::linear();
    double worst_identity = 0.0;
    for (int i = 0; i < s.steps; ++i) {
        double a = s.alpha_t[i], sg = s.sigma_t[i];
        worst_identity = std::max(worst_identity, std::fabs(a * a + sg * sg - 1.0));
    }

    double worst_round = 0.0;
    for (int trial = 0; trial < 16; ++trial) {
        float t = rng.uniform();
        Tensor x0 = Tensor::randn({16}, rng);
        Tensor eps = Tensor::randn({16}, rng);
        Tensor xt = forward_diffuse(x0, eps, t, s);
        Tensor v = v_target(x0, eps, t, s);
        Tensor rec = recover_x0(xt, v, t, s);
        for (int64_t i = 0; i < 16; ++i)
            worst_round =
                std::max(worst_round, std::fabs(double(rec.data()[i]) - x0.data()[i]));
    }

    struct PerfectDenoiser : Denoiser {
        Tensor x0;
        const Schedule& s;
        PerfectDenoiser(Tensor x0_, const Schedule& s_) : x0(std::move(x0_)), s(s_) {}
        Tensor predict_v(const Tensor& x_t, float t) override {
            float a = s.alpha(t), sg = std::max(s.sigma(t), 1e-12f);
            return mul(sub(mul(x_t, a), x0), 1.f / sg);
        }
    };
    Tensor x0 = Tensor::randn({8, 8}, rng);
    Tensor eps = Tensor::randn({8, 8}, rng);
    PerfectDenoiser d(x0, s);
    float perfect_loss = diffusion_loss(x0, d, 0.5f, eps, s).item();

    CheckResult r;
    r.pass = worst_identity <= 1e-6 && worst_round <= 1e-5 && perfect_loss <= 1e-8f;
    r.detail = strf("max |a^2+s^2-1| = %.2g, v round-trip %.2g, perfect-denoiser loss %.2g",
                    worst_identity, worst_round, double(perfect_loss));
    return r;
}

}  // namespace lavt
