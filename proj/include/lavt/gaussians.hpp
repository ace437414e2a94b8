#pragma once

#include <cstdint>
#include <vector>

#include "lavt/common.hpp"
#include "lavt/geometry.hpp"
#include "lavt/template_atlas.hpp"

namespace lavt {

// Flat arrays of renderable Gaussian attributes. Rotations are stored as
// row-major 3x3 matrices; the covariance is R diag(s^2) R^T.
struct GaussianBatch {
    std::vector<float> mu;      // N*3
    std::vector<float> rot;     // N*9
    std::vector<float> scale;   // N*3
    std::vector<float> alpha;   // N
    std::vector<float> color;   // N*3
    std::vector<uint8_t> label; // N

    int64_t size() const { return int64_t(alpha.size()); }

    void append(const GaussianBatch& o) {
        mu.insert(mu.end(), o.mu.begin(), o.mu.end());
        rot.insert(rot.end(), o.rot.begin(), o.rot.end());
        scale.insert(scale.end(), o.scale.begin(), o.scale.end());
        alpha.insert(alpha.end(), o.alpha.begin(), o.alpha.end());
        color.insert(color.end(), o.color.begin(), o.color.end());
        label.insert(label.end(), o.label.begin(), o.label.end());
    }

    GaussianBatch subset(Label l) const {
        GaussianBatch out;
        for (int64_t i = 0; i < size(); ++i) {
            if (Label(label[i]) != l) continue;
            out.mu.insert(out.mu.end(), mu.begin() + i * 3, mu.begin() + i * 3 + 3);
            out.rot.insert(out.rot.end(), rot.begin() + i * 9, rot.begin() + i * 9 + 9);
            out.scale.insert(out.scale.end(), scale.begin() + i * 3, scale.begin() + i * 3 + 3);
            out.alpha.push_back(alpha[i]);
            out.color.insert(out.color.end(), color.begin() + i * 3, color.begin() + i * 3 + 3);
            out.label.push_back(label[i]);
        }
        return out;
    }

    Mat3 rotation(int64_t i) const {
        Mat3 r;
        for (int k = 0; k < 9; ++k) r.m[k] = rot[i * 9 + k];
        return r;
    }

    void validate() const {
        int64_t n = size();
        LAVT_CHECK(int64_t(mu.size()) == n * 3 && int64_t(rot.size()) == n * 9 &&
                       int64_t(scale.size()) == n * 3 && int64_t(color.size()) == n * 3 &&
                       int64_t(label.size()) == n,
                   "gaussian batch: array lengths disagree");
        for (int64_t i = 0; i < n * 3; ++i)
            LAVT_CHECK(scale[i] > 0.f, "gaussian batch: non-positive scale");
        for (int64_t i = 0; i < n; ++i)
            LAVT_CHECK(alpha[i] >= 0.f && alpha[i] <= 1.f,
                       "gaussian batch: opacity outside [0,1]");
    }
};

}  // namespace lavt
