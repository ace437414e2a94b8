#include "lavt/diffusion.hpp"

#include <cmath>

#include "lavt/checkpoint.hpp"

namespace lavt {

Schedule Schedule::linear(int steps, float beta_start, float beta_end) {
    LAVT_CHECK(steps >= 1, "schedule: need at least one step");
    Schedule s;
    s.steps = steps;
    s.beta.resize(steps);
    s.alpha_bar.resize(steps);
    s.alpha_t.resize(steps);
    s.sigma_t.resize(steps);
    double cum = 1.0;
    for (int i = 0; i < steps; ++i) {
        float b = steps == 1 ? beta_start
                             : beta_start + (beta_end - beta_start) * float(i) / float(steps - 1);
        s.beta[i] = b;
        cum *= 1.0 - double(b);
        s.alpha_bar[i] = float(cum);
        s.alpha_t[i] = std::sqrt(float(cum));
        s.sigma_t[i] = std::sqrt(1.f - float(cum));
    }
    return s;
}

int Schedule::index_of(float t) const {
    LAVT_CHECK(t >= 0.f && t <= 1.f, "schedule: t=%g outside [0,1]", t);
    return int(std::lround(double(t) * (steps - 1)));
}

Tensor forward_diffuse(const Tensor& x0, const Tensor& eps, float t, const Schedule& s) {
    LAVT_CHECK(x0.shape() == eps.shape(), "forward_diffuse: x0 %s vs eps %s",
               shape_str(x0.shape()).c_str(), shape_str(eps.shape()).c_str());
    float a = s.alpha(t), sg = s.sigma(t);
    return add(mul(x0, a), mul(eps, sg));
}

Tensor v_target(const Tensor& x0, const Tensor& eps, float alpha, float sigma) {
    LAVT_CHECK(x0.shape() == eps.shape(), "v_target: shape mismatch");
    return sub(mul(eps, alpha), mul(x0, sigma));
}

Tensor recover_x0(const Tensor& x_t, const Tensor& v, float alpha, float sigma) {
    LAVT_CHECK(x_t.shape() == v.shape(), "recover_x0: shape mismatch");
    return sub(mul(x_t, alpha), mul(v, sigma));
}

Tensor diffusion_loss(const Tensor& x0, Denoiser& denoiser, float t, const Tensor& eps,
                      const Schedule& s, float omega) {
    float a = s.alpha(t), sg = s.sigma(t);
    float w = std::pow(a / std::max(sg, 1e-12f), 2.f * omega);
    w = std::min(w, 1e4f);
    Tensor x_t = add(mul(x0, a), mul(eps, sg));
    Tensor v_hat = denoiser.predict_v(x_t, t);
    LAVT_CHECK(v_hat.shape() == x0.shape(), "diffusion_loss: denoiser output %s vs x0 %s",
               shape_str(v_hat.shape()).c_str(), shape_str(x0.shape()).c_str());
    Tensor x0_hat = sub(mul(x_t, a), mul(v_hat, sg));
    Tensor diff = sub(x0_hat, x0);
    return mul(sum(mul(diff, diff)), 0.5f * w);
}

// ---------------------------------------------------------------------------

ToyDenoiser::ToyDenoiser(Rng& rng) {
    auto conv_init = [&](int64_t out_ch, int64_t in_ch) {
        float bound = 1.f / std::sqrt(float(in_ch * 9));
        return Tensor::rand_uniform({out_ch, in_ch, 3, 3}, rng, -bound, bound);
    };
    conv1_w = conv_init(kHidden, kPlaneChannels);
    conv1_b = Tensor::zeros({kHidden});
    conv2_w = conv_init(kHidden, kHidden);
    conv2_b = Tensor::zeros({kHidden});
    conv3_w = conv_init(kPlaneChannels, kHidden);
    conv3_b = Tensor::zeros({kPlaneChannels});
    temb_w = Tensor::randn({kHidden, 2 * kTimeFreqs}, rng, 0.1f);
    temb_b = Tensor::zeros({kHidden});
}

std::vector<std::pair<std::string, Tensor>> ToyDenoiser::named() {
    return {{"conv1.w", conv1_w}, {"conv1.b", conv1_b}, {"conv2.w", conv2_w},
            {"conv2.b", conv2_b}, {"conv3.w", conv3_w}, {"conv3.b", conv3_b},
            {"temb.w", temb_w},   {"temb.b", temb_b}};
}

std::vector<Tensor> ToyDenoiser::parameters() {
    std::vector<Tensor> out;
    for (auto& [n, t] : named()) out.push_back(t);
    return out;
}

void ToyDenoiser::mark_trainable() {
    for (Tensor t : parameters()) t.set_requires_grad(true);
}

Tensor ToyDenoiser::predict_v(const Tensor& x_t, float t) {
    check_plane_shape(x_t);
    int64_t h = x_t.dim(1), w = x_t.dim(2);
    Tensor x = reshape(x_t, {1, kPlaneChannels, h, w});

    // sinusoidal features of t projected to per-channel biases
    std::vector<float> feats(2 * kTimeFreqs);
    for (int k = 0; k < kTimeFreqs; ++k) {
        float f = std::pow(2.f, float(k)) * 3.14159265358979f;
        feats[2 * k] = std::sin(f * t);
        feats[2 * k + 1] = std::cos(f * t);
    }
    Tensor temb = matmul(temb_w, Tensor::from_data({2 * kTimeFreqs, 1}, feats));  // (16,1)

    Tensor h1 = silu(conv2d(x, conv1_w, conv1_b));
    h1 = add(h1, reshape(add(temb, reshape(temb_b, {kHidden, 1})), {1, kHidden, 1, 1}));
    Tensor h2 = silu(conv2d(h1, conv2_w, conv2_b));
    Tensor out = conv2d(h2, conv3_w, conv3_b);
    return reshape(out, {kPlaneChannels, h, w});
}

void ToyDenoiser::save(const std::string& path) const {
    Checkpoint c;
    for (auto& [n, t] : const_cast<ToyDenoiser*>(this)->named()) c.put(n, t);
    save_checkpoint(c, path);
}

std::unique_ptr<ToyDenoiser> ToyDenoiser::load(const std::string& path) {
    Checkpoint c = load_checkpoint(path);
    Rng rng(0);
    auto d = std::unique_ptr<ToyDenoiser>(new ToyDenoiser(rng));
    for (auto& [n, t] : d->named()) {
        Tensor stored = c.get(n);
        LAVT_CHECK(stored.shape() == t.shape(), "denoiser checkpoint: '%s' shape %s", n.c_str(),
                   shape_str(stored.shape()).c_str());
        t.vec() = stored.vec();
    }
    return d;
}

// ---------------------------------------------------------------------------

Tensor ddpm_sample(Denoiser& denoiser, const Schedule& s, int sample_steps, Rng& rng) {
    LAVT_CHECK(sample_steps >= 1 && sample_steps <= s.steps,
               "ddpm_sample: %d steps over a %d-step schedule", sample_steps, s.steps);
    // strided index ladder from T-1 down to 0
    std::vector<int> ladder(sample_steps);
    for (int k = 0; k < sample_steps; ++k) {
        double f = sample_steps == 1
                       ? 0.0
                       : double(sample_steps - 1 - k) / double(sample_steps - 1);
        ladder[k] = int(std::lround(f * (s.steps - 1)));
    }

    Tensor x = empty_plane();
    for (auto& v : x.vec()) v = rng.normal();

    for (int k = 0; k < sample_steps; ++k) {
        int idx = ladder[k];
        float t = s.steps == 1 ? 0.f : float(idx) / float(s.steps - 1);
        Tensor v = denoiser.predict_v(x, t);
        float a = s.alpha_t[idx], sg = s.sigma_t[idx];
        Tensor x0_hat = sub(mul(x, a), mul(v, sg));

        float abar = s.alpha_bar[idx];
        float abar_prev = k + 1 < sample_steps ? s.alpha_bar[ladder[k + 1]] : 1.f;
        float astep = abar / abar_prev;          // product of (1-beta) over the hop
        float var = (1.f - astep) * (1.f - abar_prev) / (1.f - abar);
        float c0 = std::sqrt(abar_prev) * (1.f - astep) / (1.f - abar);
        float ct = std::sqrt(astep) * (1.f - abar_prev) / (1.f - abar);

        Tensor mean = add(mul(x0_hat, c0), mul(x, ct));
        if (k + 1 < sample_steps && var > 0.f) {
            float sd = std::sqrt(var);
            Tensor noise = x.clone();
            for (auto& nv : noise.vec()) nv = rng.normal() * sd;
            x = add(mean, noise);
        } else {
            x = mean;
        }
    }
    return x;
}

Tensor concat_layers(const std::array<Tensor, kNumLayers>& layers) {
    std::vector<Tensor> parts;
    for (const Tensor& l : layers) {
        LAVT_CHECK((l.shape() == Shape{kPlaneChannels, kPlaneRes, kPlaneRes}),
                   "concat_layers: layer must be (12,128,128), got %s",
                   shape_str(l.shape()).c_str());
        parts.push_back(l);
    }
    return concat(parts, 2);
}

std::array<Tensor, kNumLayers> split_layers(const Tensor& plane) {
    check_plane_shape(plane);
    std::array<Tensor, kNumLayers> out;
    for (int l = 0; l < kNumLayers; ++l)
        out[l] = slice(plane, 2, int64_t(l) * kPlaneRes, kPlaneRes);
    return out;
}

}  // namespace lavt
