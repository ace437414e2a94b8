#include "lavt/geometry.hpp"

#include "lavt/common.hpp"

namespace lavt {

Mat3 inverse(const Mat3& a) {
    float d = a.det();
    LAVT_CHECK(std::fabs(d) > 1e-20f, "Mat3 inverse: singular matrix (det=%g)", d);
    float inv = 1.f / d;
    Mat3 r;
    r(0, 0) = (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) * inv;
    r(0, 1) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) * inv;
    r(0, 2) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) * inv;
    r(1, 0) = (a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2)) * inv;
    r(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) * inv;
    r(1, 2) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) * inv;
    r(2, 0) = (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)) * inv;
    r(2, 1) = (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) * inv;
    r(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) * inv;
    return r;
}

Mat4 rigid_inverse(const Mat4& t) {
    Mat3 rt = t.rotation().transposed();
    Vec3 tr = t.translation();
    Vec3 ti = (rt * tr) * -1.f;
    return Mat4::from_rt(rt, ti);
}

static Mat3 skew(const Vec3& v) {
    Mat3 r;
    r.m = {0, -v.z, v.y, v.z, 0, -v.x, -v.y, v.x, 0};
    return r;
}

Mat3 rodrigues(const Vec3& a) {
    float theta2 = dot(a, a);
    Mat3 k = skew(a);
    if (theta2 < 1e-16f) {
        // I + K + K^2/2, accurate for tiny angles
        return Mat3::identity() + k + (k * k) * 0.5f;
    }
    float theta = std::sqrt(theta2);
    float s = std::sin(theta) / theta;
    float c = (1.f - std::cos(theta)) / theta2;
    return Mat3::identity() + k * s + (k * k) * c;
}

std::array<Mat3, 3> rodrigues_jacobian(const Vec3& a) {
    // Gallego & Yezzi: dR/da_i = (a_i [a]x + [a x (I - R) e_i]x) / |a|^2 * R
    std::array<Mat3, 3> out;
    float theta2 = dot(a, a);
    Mat3 r = rodrigues(a);
    if (theta2 < 1e-12f) {
        Vec3 e[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
        for (int i = 0; i < 3; ++i) out[i] = skew(e[i]);
        return out;
    }
    Mat3 ka = skew(a);
    Mat3 imr = Mat3::identity() - r;
    Vec3 e[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int i = 0; i < 3; ++i) {
        Vec3 v = cross(a, imr * e[i]);
        Mat3 num = ka * a[i] + skew(v);
        out[i] = (num * (1.f / theta2)) * r;
    }
    return out;
}

Mat3 polar_rotation(const Mat3& a) {
    // Newton iteration U <- (U + U^-T)/2; quadratic convergence for det > 0.
    Mat3 u = a;
    for (int it = 0; it < 32; ++it) {
        Mat3 uinv_t = inverse(u).transposed();
        Mat3 next;
        float diff = 0.f;
        for (int i = 0; i < 9; ++i) {
            next.m[i] = 0.5f * (u.m[i] + uinv_t.m[i]);
            diff += std::fabs(next.m[i] - u.m[i]);
        }
        u = next;
        if (diff < 1e-9f) break;
    }
    return u;
}

std::array<float, 4> rotation_to_quat(const Mat3& r) {
    std::array<float, 4> q{};
    float tr = r(0, 0) + r(1, 1) + r(2, 2);
    if (tr > 0.f) {
        float s = std::sqrt(tr + 1.f) * 2.f;
        q[0] = 0.25f * s;
        q[1] = (r(2, 1) - r(1, 2)) / s;
        q[2] = (r(0, 2) - r(2, 0)) / s;
        q[3] = (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        float s = std::sqrt(1.f + r(0, 0) - r(1, 1) - r(2, 2)) * 2.f;
        q[0] = (r(2, 1) - r(1, 2)) / s;
        q[1] = 0.25f * s;
        q[2] = (r(0, 1) + r(1, 0)) / s;
        q[3] = (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) > r(2, 2)) {
        float s = std::sqrt(1.f + r(1, 1) - r(0, 0) - r(2, 2)) * 2.f;
        q[0] = (r(0, 2) - r(2, 0)) / s;
        q[1] = (r(0, 1) + r(1, 0)) / s;
        q[2] = 0.25f * s;
        q[3] = (r(1, 2) + r(2, 1)) / s;
    } else {
        float s = std::sqrt(1.f + r(2, 2) - r(0, 0) - r(1, 1)) * 2.f;
        q[0] = (r(1, 0) - r(0, 1)) / s;
        q[1] = (r(0, 2) + r(2, 0)) / s;
        q[2] = (r(1, 2) + r(2, 1)) / s;
        q[3] = 0.25f * s;
    }
    float n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    for (auto& v : q) v /= n;
    return q;
}

Mat3 quat_to_rotation(const std::array<float, 4>& q) {
    float w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
           2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
           2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)};
    return r;
}

}  // namespace lavt
