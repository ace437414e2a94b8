#include "lavt/adam.hpp"

#include <cmath>

namespace lavt {

void adam_step(Tensor& param, AdamState& state, const AdamConfig& cfg) {
    if (!state.m.defined()) {
        state.m = Tensor::zeros(param.shape());
        state.v = Tensor::zeros(param.shape());
    }
    LAVT_CHECK(state.m.shape() == param.shape(), "adam_step: state shape %s vs param %s",
               shape_str(state.m.shape()).c_str(), shape_str(param.shape()).c_str());

    int64_t n = param.numel();
    const std::vector<float>& g = param.grad_const();
    if (!g.empty()) {
        for (int64_t i = 0; i < n; ++i) {
            if (!std::isfinite(g[i])) {
                ++state.skipped_nonfinite;
                param.zero_grad();
                return;
            }
        }
    }

    ++state.step_count;
    float bc1 = 1.f - std::pow(cfg.beta1, float(state.step_count));
    float bc2 = 1.f - std::pow(cfg.beta2, float(state.step_count));
    float* p = param.data();
    float* m = state.m.data();
    float* v = state.v.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        float gi = g.empty() ? 0.f : g[i];
        m[i] = cfg.beta1 * m[i] + (1.f - cfg.beta1) * gi;
        v[i] = cfg.beta2 * v[i] + (1.f - cfg.beta2) * gi * gi;
        float mhat = m[i] / bc1;
        float vhat = v[i] / bc2;
        p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    param.zero_grad();
}

}  // namespace lavt
