#pragma once

#include "lavt/tensor.hpp"

namespace lavt {

struct AdamState {
    Tensor m, v;
    int64_t step_count = 0;
    int64_t skipped_nonfinite = 0;
};

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// One bias-corrected Adam update using param's accumulated gradient (missing
// gradient counts as zero). A non-finite gradient skips the whole tensor and
// bumps skipped_nonfinite. Clears the gradient afterwards.
void adam_step(Tensor& param, AdamState& state, const AdamConfig& cfg);

}  // namespace lavt
