#pragma once

#include "lavt/common.hpp"
#include "lavt/geometry.hpp"

namespace lavt {

// Pinhole camera. world_to_cam maps world points into a frame with x right,
// y down, z forward; pixel (i,j) is sampled at its center (j+0.5, i+0.5).
struct Camera {
    float fx = 1.f, fy = 1.f, cx = 0.f, cy = 0.f;
    Mat4 world_to_cam = Mat4::identity();
    int width = 0, height = 0;

    void validate() const {
        LAVT_CHECK(fx > 0.f && fy > 0.f, "camera: focal lengths must be positive");
        LAVT_CHECK(width > 0 && height > 0, "camera: empty image");
        Mat3 r = world_to_cam.rotation();
        Mat3 rtr = r.transposed() * r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                LAVT_CHECK(std::fabs(rtr(i, j) - (i == j ? 1.f : 0.f)) < 1e-4f,
                           "camera: rotation part is not orthonormal");
    }
};

// Camera on a ring looking at `target` (world y-up).
Camera look_at_camera(const Vec3& position, const Vec3& target, float focal, int width,
                      int height);

inline Camera ring_camera(float azimuth, float elevation, float radius, const Vec3& target,
                          float focal, int size) {
    Vec3 pos = {target.x + radius * std::sin(azimuth) * std::cos(elevation),
                target.y + radius * std::sin(elevation),
                target.z + radius * std::cos(azimuth) * std::cos(elevation)};
    return look_at_camera(pos, target, focal, size, size);
}

}  // namespace lavt
