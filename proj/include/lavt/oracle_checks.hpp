#pragma once

#include <string>

#include "lavt/rng.hpp"

namespace lavt {

struct CheckResult {
    bool pass = false;
    std::string detail;
};

// Tiled renderer vs the brute-force reference with matched cutoff.
CheckResult check_renderer_oracle(int scenes, int gaussians, int image_size, uint64_t seed,
                                  double tolerance = 1e-5);

// Analytic backward vs central differences over mu/scale/rot/alpha/color.
CheckResult check_renderer_gradients(int scenes, int gaussians, int image_size, uint64_t seed,
                                     double tolerance = 1e-2, double required_fraction = 0.95);

// Schedule identities, v round trip, perfect-denoiser loss.
CheckResult check_diffusion_algebra(uint64_t seed);

}  // namespace lavt
