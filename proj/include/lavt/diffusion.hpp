#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "lavt/feature_plane.hpp"
#include "lavt/ops.hpp"

namespace lavt {

// Discrete linear-beta noise schedule; continuous t in [0,1] maps to index
// round(t*(T-1)). alpha(t)^2 + sigma(t)^2 = 1 at every step.
struct Schedule {
    int steps = 1000;
    std::vector<float> beta;       // T
    std::vector<float> alpha_bar;  // T, cumulative product of (1-beta)
    std::vector<float> alpha_t;    // sqrt(alpha_bar)
    std::vector<float> sigma_t;    // sqrt(1 - alpha_bar)

    static Schedule linear(int steps = 1000, float beta_start = 1e-4f, float beta_end = 0.02f);

    int index_of(float t) const;
    float alpha(float t) const { return alpha_t[index_of(t)]; }
    float sigma(float t) const { return sigma_t[index_of(t)]; }
};

// Anything mapping (x_t, t) to a predicted v of the same shape.
class Denoiser {
   public:
    virtual ~Denoiser() = default;
    virtual Tensor predict_v(const Tensor& x_t, float t) = 0;
    virtual std::vector<Tensor> parameters() { return {}; }
};

// Three conv blocks at hidden width 16 with a sinusoidal time embedding added
// channel-wise; just enough capacity to overfit a handful of planes.
class ToyDenoiser : public Denoiser {
   public:
    explicit ToyDenoiser(Rng& rng);
    Tensor predict_v(const Tensor& x_t, float t) override;
    std::vector<Tensor> parameters() override;
    void mark_trainable();
    void save(const std::string& path) const;
    static std::unique_ptr<ToyDenoiser> load(const std::string& path);

    static constexpr int kHidden = 16;
    static constexpr int kTimeFreqs = 8;

   private:
    ToyDenoiser() = default;
    Tensor conv1_w, conv1_b;   // 12 -> 16
    Tensor conv2_w, conv2_b;   // 16 -> 16
    Tensor conv3_w, conv3_b;   // 16 -> 12
    Tensor temb_w, temb_b;     // (16, 2*kTimeFreqs), (16)
    std::vector<std::pair<std::string, Tensor>> named();
};

// x_t = alpha(t) x0 + sigma(t) eps. eps is supplied by the caller so sampling
// stays deterministic.
Tensor forward_diffuse(const Tensor& x0, const Tensor& eps, float t, const Schedule& s);

Tensor v_target(const Tensor& x0, const Tensor& eps, float alpha, float sigma);
Tensor recover_x0(const Tensor& x_t, const Tensor& v, float alpha, float sigma);
inline Tensor v_target(const Tensor& x0, const Tensor& eps, float t, const Schedule& s) {
    return v_target(x0, eps, s.alpha(t), s.sigma(t));
}
inline Tensor recover_x0(const Tensor& x_t, const Tensor& v, float t, const Schedule& s) {
    return recover_x0(x_t, v, s.alpha(t), s.sigma(t));
}

// 0.5 w(t) ||x0_hat - x0||^2 with w(t) = (alpha/sigma)^(2*omega) clamped to
// 1e4. Gradients reach both the denoiser parameters and x0.
Tensor diffusion_loss(const Tensor& x0, Denoiser& denoiser, float t, const Tensor& eps,
                      const Schedule& s, float omega = 0.5f);

// Ancestral sampling over a stride of the schedule; deterministic per seed.
Tensor ddpm_sample(Denoiser& denoiser, const Schedule& s, int sample_steps, Rng& rng);

// Width-wise layer packing: columns [128k, 128(k+1)) hold layer k in the
// order body, hair+shoes, top+bottom. split is the exact inverse.
Tensor concat_layers(const std::array<Tensor, kNumLayers>& layers);
std::array<Tensor, kNumLayers> split_layers(const Tensor& plane);

}  // namespace lavt
