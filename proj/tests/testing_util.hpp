#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lavt/tensor.hpp"

namespace lavt::testing {

// Central finite differences of f at x, used as the gradient oracle.
// Divides by the realized f32 step so quantization of x+-h cancels out.
// f should reduce in double precision to keep the oracle's noise low.
inline std::vector<double> finite_diff(const std::function<double(const Tensor&)>& f, Tensor x,
                                       double h = 1e-3) {
    std::vector<double> g(static_cast<size_t>(x.numel()));
    for (int64_t i = 0; i < x.numel(); ++i) {
        float orig = x.data()[i];
        float xp = orig + static_cast<float>(h);
        float xm = orig - static_cast<float>(h);
        x.data()[i] = xp;
        double fp = f(x);
        x.data()[i] = xm;
        double fm = f(x);
        x.data()[i] = orig;
        g[static_cast<size_t>(i)] = (fp - fm) / (double(xp) - double(xm));
    }
    return g;
}

inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

// Fraction of entries whose relative error is below tol.
inline double grad_match_fraction(const std::vector<float>& analytic,
                                  const std::vector<double>& fd, double tol,
                                  double floor = 1e-4) {
    size_t ok = 0;
    for (size_t i = 0; i < fd.size(); ++i) {
        double a = i < analytic.size() ? analytic[i] : 0.0;
        if (rel_err(a, fd[i], floor) < tol) ++ok;
    }
    return fd.empty() ? 1.0 : double(ok) / double(fd.size());
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(double(a[i]) - double(b[i])));
    return m;
}

}  // namespace lavt::testing
