#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lavt {

// Deterministic random source. All distributions are implemented on top of
// the raw 64-bit stream so results are identical across standard libraries.
class Rng {
   public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    float uniform() {
        return static_cast<float>((gen_() >> 11) * 0x1.0p-53);
    }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    int64_t uniform_int(int64_t n) {
        return static_cast<int64_t>(gen_() % static_cast<uint64_t>(n));
    }

    // standard normal via Box-Muller
    float normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        float u1 = 0.f;
        while (u1 <= 1e-12f) u1 = uniform();
        float u2 = uniform();
        float r = std::sqrt(-2.f * std::log(u1));
        float a = 6.28318530717958647692f * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // independent child stream
    Rng fork(uint64_t salt) {
        uint64_t s = gen_() ^ (salt * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
        return Rng(s);
    }

   private:
    std::mt19937_64 gen_;
    float spare_ = 0.f;
    bool has_spare_ = false;
};

}  // namespace lavt
