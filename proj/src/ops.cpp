#include "lavt/ops.hpp"

#include <algorithm>
#include <cmath>

namespace lavt {

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b) {
    size_t ra = a.size(), rb = b.size(), r = std::max(ra, rb);
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        int64_t da = i < r - ra ? 1 : a[i - (r - ra)];
        int64_t db = i < r - rb ? 1 : b[i - (r - rb)];
        LAVT_CHECK(da == db || da == 1 || db == 1, "broadcast mismatch: %s vs %s",
                   shape_str(a).c_str(), shape_str(b).c_str());
        out[i] = std::max(da, db);
    }
    return out;
}

// strides of `in` aligned to the broadcast output shape, 0 on broadcast dims
std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
    size_t r = out.size(), ri = in.size();
    std::vector<int64_t> st(r, 0);
    int64_t acc = 1;
    for (size_t i = ri; i-- > 0;) {
        size_t oi = i + (r - ri);
        st[oi] = (in[i] == 1 && out[oi] != 1) ? 0 : acc;
        acc *= in[i];
    }
    return st;
}

// Odometer over the output shape yielding linear offsets for two inputs.
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<int64_t>& sa,
                        const std::vector<int64_t>& sb, F&& f) {
    size_t r = out.size();
    int64_t n = shape_numel(out);
    std::vector<int64_t> idx(r, 0);
    int64_t oa = 0, ob = 0;
    for (int64_t lin = 0; lin < n; ++lin) {
        f(lin, oa, ob);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out[d]) break;
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
            if (d == 0) return;
        }
        if (r == 0) return;
    }
}

struct AddFn {
    static float fwd(float a, float b) { return a + b; }
    static float dfa(float, float) { return 1.f; }
    static float dfb(float, float) { return 1.f; }
};
struct SubFn {
    static float fwd(float a, float b) { return a - b; }
    static float dfa(float, float) { return 1.f; }
    static float dfb(float, float) { return -1.f; }
};
struct MulFn {
    static float fwd(float a, float b) { return a * b; }
    static float dfa(float, float b) { return b; }
    static float dfb(float a, float) { return a; }
};
struct DivFn {
    static float fwd(float a, float b) { return a / b; }
    static float dfa(float, float b) { return 1.f / b; }
    static float dfb(float a, float b) { return -a / (b * b); }
};

template <class Fn>
Tensor binary_op(const Tensor& a, const Tensor& b) {
    Shape os = broadcast_shape(a.shape(), b.shape());
    Tensor out = Tensor::zeros(os);
    auto sa = broadcast_strides(a.shape(), os);
    auto sb = broadcast_strides(b.shape(), os);
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    if (a.shape() == b.shape()) {
        int64_t n = out.numel();
        for (int64_t i = 0; i < n; ++i) po[i] = Fn::fwd(pa[i], pb[i]);
    } else {
        for_each_broadcast(os, sa, sb, [&](int64_t o, int64_t ia, int64_t ib) {
            po[o] = Fn::fwd(pa[ia], pb[ib]);
        });
    }
    if (tape_active_for({&a, &b})) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        auto ssa = sa, ssb = sb;
        tape->record([ai, bi, oi, os, ssa, ssb]() {
            if (oi->grad.empty()) return;
            const auto& go = oi->grad;
            bool wa = ai->requires_grad, wb = bi->requires_grad;
            if (!wa && !wb) return;
            if (wa && ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.f);
            if (wb && bi->grad.empty()) bi->grad.assign(bi->data.size(), 0.f);
            const float* pa = ai->data.data();
            const float* pb = bi->data.data();
            for_each_broadcast(os, ssa, ssb, [&](int64_t o, int64_t ia, int64_t ib) {
                float g = go[o];
                if (wa) ai->grad[ia] += g * Fn::dfa(pa[ia], pb[ib]);
                if (wb) bi->grad[ib] += g * Fn::dfb(pa[ia], pb[ib]);
            });
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op<AddFn>(a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op<SubFn>(a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op<MulFn>(a, b); }
Tensor divide(const Tensor& a, const Tensor& b) { return binary_op<DivFn>(a, b); }

Tensor affine(const Tensor& x, float scale, float shift) {
    Tensor out = Tensor::zeros(x.shape());
    const float* px = x.data();
    float* po = out.data();
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = scale * px[i] + shift;
    if (tape_active_for({&x})) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        auto xi = x.impl(), oi = out.impl();
        tape->record([xi, oi, scale]() {
            if (oi->grad.empty() || !xi->requires_grad) return;
            if (xi->grad.empty()) xi->grad.assign(xi->data.size(), 0.f);
            for (size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += scale * oi->grad[i];
        });
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    LAVT_CHECK(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
               "matmul: incompatible shapes %s x %s", shape_str(a.shape()).c_str(),
               shape_str(b.shape()).c_str());
    int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t kk = 0; kk < k; ++kk) {
            float av = pa[i * k + kk];
            const float* brow = pb + kk * n;
            float* orow = po + i * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    if (tape_active_for({&a, &b})) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        tape->record([ai, bi, oi, m, k, n]() {
            if (oi->grad.empty()) return;
            const float* go = oi->grad.data();
            if (ai->requires_grad) {
                if (ai->grad.empty()) ai->grad.assign(ai->data.size(), 0.f);
                // dA = dC * B^T
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t kk = 0; kk < k; ++kk) {
                        float s = 0.f;
                        for (int64_t j = 0; j < n; ++j)
                            s += go[i * n + j] * bi->data[kk * n + j];
                        ai->grad[i * k + kk] += s;
                    }
            }
            if (bi->requires_grad) {
                if (bi->grad.empty()) bi->grad.assign(bi->data.size(), 0.f);
                // dB = A^T * dC
                for (int64_t kk = 0; kk < k; ++kk)
                    for (int64_t j = 0; j < n; ++j) {
                        float s = 0.f;
                        for (int64_t i = 0; i < m; ++i)
                            s += ai->data[i * k + kk] * go[i * n + j];
                        bi->grad[kk * n + j] += s;
                    }
            }
        });
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    LAVT_CHECK(x.rank() == 4 && w.rank() == 4 && b.rank() == 1,
               "conv2d: expected x(N,C,H,W), w(K,C,kh,kw), b(K); got %s %s %s",
               shape_str(x.shape()).c_str(), shape_str(w.shape()).c_str(),
               shape_str(b.shape()).c_str());
    int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int64_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    LAVT_CHECK(w.dim(1) == C, "conv2d: channel mismatch %lld vs %lld", (long long)w.dim(1),
               (long long)C);
    LAVT_CHECK(b.dim(0) == K, "conv2d: bias size %lld vs %lld kernels", (long long)b.dim(0),
               (long long)K);
    LAVT_CHECK(kh % 2 == 1 && kw % 2 == 1, "conv2d: kernel sizes must be odd");
    int64_t ph = kh / 2, pw = kw / 2;

    Tensor out = Tensor::zeros({N, K, H, W});
    const float* px = x.data();
    const float* pw_ = w.data();
    const float* pb = b.data();
    float* po = out.data();

#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n)
        for (int64_t k = 0; k < K; ++k)
            for (int64_t y = 0; y < H; ++y) {
                float* orow = po + ((n * K + k) * H + y) * W;
                for (int64_t xx = 0; xx < W; ++xx) orow[xx] = pb[k];
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t dy = 0; dy < kh; ++dy) {
                        int64_t iy = y + dy - ph;
                        if (iy < 0 || iy >= H) continue;
                        const float* xrow = px + ((n * C + c) * H + iy) * W;
                        const float* wrow = pw_ + ((k * C + c) * kh + dy) * kw;
                        for (int64_t dx = 0; dx < kw; ++dx) {
                            float wv = wrow[dx];
                            int64_t lo = std::max<int64_t>(0, pw - dx);
                            int64_t hi = std::min<int64_t>(W, W + pw - dx);
                            const float* xr = xrow + (lo + dx - pw);
                            for (int64_t xx = lo; xx < hi; ++xx) orow[xx] += wv * (*xr++);
                        }
                    }
            }

    if (tape_active_for({&x, &w, &b})) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        auto xi = x.impl(), wi = w.impl(), bi = b.impl(), oi = out.impl();
        tape->record([xi, wi, bi, oi, N, C, H, W, K, kh, kw, ph, pw]() {
            if (oi->grad.empty()) return;
            const float* go = oi->grad.data();
            if (bi->requires_grad) {
                if (bi->grad.empty()) bi->grad.assign(bi->data.size(), 0.f);
#pragma omp parallel for schedule(static)
                for (int64_t k = 0; k < K; ++k) {
                    float s = 0.f;
                    for (int64_t n = 0; n < N; ++n) {
                        const float* g = go + (n * K + k) * H * W;
                        for (int64_t i = 0; i < H * W; ++i) s += g[i];
                    }
                    bi->grad[k] += s;
                }
            }
            if (wi->requires_grad) {
                if (wi->grad.empty()) wi->grad.assign(wi->data.size(), 0.f);
#pragma omp parallel for collapse(2) schedule(static)
                for (int64_t k = 0; k < K; ++k)
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t dy = 0; dy < kh; ++dy)
                            for (int64_t dx = 0; dx < kw; ++dx) {
                                float s = 0.f;
                                for (int64_t n = 0; n < N; ++n)
                                    for (int64_t y = 0; y < H; ++y) {
                                        int64_t iy = y + dy - ph;
                                        if (iy < 0 || iy >= H) continue;
                                        const float* g = go + ((n * K + k) * H + y) * W;
                                        const float* xr =
                                            xi->data.data() + ((n * C + c) * H + iy) * W;
                                        int64_t lo = std::max<int64_t>(0, pw - dx);
                                        int64_t hi = std::min<int64_t>(W, W + pw - dx);
                                        for (int64_t xx = lo; xx < hi; ++xx)
                                            s += g[xx] * xr[xx + dx - pw];
                                    }
                                wi->grad[((k * C + c) * kh + dy) * kw + dx] += s;
                            }
            }
            if (xi->requires_grad) {
                if (xi->grad.empty()) xi->grad.assign(xi->data.size(), 0.f);
#pragma omp parallel for collapse(2) schedule(static)
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t iy = 0; iy < H; ++iy) {
                            float* gx = xi->grad.data() + ((n * C + c) * H + iy) * W;
                            for (int64_t k = 0; k < K; ++k)
                                for (int64_t dy = 0; dy < kh; ++dy) {
                                    int64_t y = iy - dy + ph;
                                    if (y < 0 || y >= H) continue;
                                    const float* g = go + ((n * K + k) * H + y) * W;
                                    const float* wrow =
                                        wi->data.data() + ((k * C + c) * kh + dy) * kw;
                                    for (int64_t dx = 0; dx < kw; ++dx) {
                                        float wv = wrow[dx];
                                        int64_t lo = std::max<int64_t>(0, pw - dx);
                                        int64_t hi = std::min<int64_t>(W, W + pw - dx);
                                        for (int64_t xx = lo; xx < hi; ++xx)
                                            gx[xx + dx - pw] += wv * g[xx];
                                    }
                                }
                        }
            }
        });
    }
    return out;
}

BatchNorm2d BatchNorm2d::create(int64_t channels) {
    BatchNorm2d bn;
    bn.gamma = Tensor::full({channels}, 1.f);
    bn.beta = Tensor::zeros({channels});
    bn.running_mean = Tensor::zeros({channels});
    bn.running_var = Tensor::full({channels}, 1.f);
    return bn;
}

Tensor batch_norm2d(const Tensor& x, BatchNorm2d& bn, bool training) {
    LAVT_CHECK(x.rank() == 4, "batch_norm2d: expected (N,C,H,W), got %s",
               shape_str(x.shape()).c_str());
    int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    LAVT_CHECK(bn.gamma.dim(0) == C, "batch_norm2d: %lld channels, params have %lld",
               (long long)C, (long long)bn.gamma.dim(0));
    int64_t plane = H * W;
    int64_t cnt = N * plane;
    Tensor out = Tensor::zeros(x.shape());

    std::vector<float> mean_v(C), ivar_v(C), var_v(C);
    const float* px = x.data();
    if (training) {
        for (int64_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (int64_t n = 0; n < N; ++n) {
                const float* p = px + (n * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) s += p[i];
            }
            float m = static_cast<float>(s / cnt);
            double v = 0.0;
            for (int64_t n = 0; n < N; ++n) {
                const float* p = px + (n * C + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    float d = p[i] - m;
                    v += double(d) * d;
                }
            }
            float var = static_cast<float>(v / cnt);
            mean_v[c] = m;
            var_v[c] = var;
            ivar_v[c] = 1.f / std::sqrt(var + bn.eps);
            // running buffers track the unbiased variance
            float unbiased = cnt > 1 ? var * float(cnt) / float(cnt - 1) : var;
            bn.running_mean.data()[c] =
                (1.f - bn.momentum) * bn.running_mean.data()[c] + bn.momentum * m;
            bn.running_var.data()[c] =
                (1.f - bn.momentum) * bn.running_var.data()[c] + bn.momentum * unbiased;
        }
    } else {
        for (int64_t c = 0; c < C; ++c) {
            mean_v[c] = bn.running_mean.data()[c];
            var_v[c] = bn.running_var.data()[c];
            ivar_v[c] = 1.f / std::sqrt(var_v[c] + bn.eps);
        }
    }

    float* po = out.data();
    const float* pg = bn.gamma.data();
    const float* pbeta = bn.beta.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const float* p = px + (n * C + c) * plane;
            float* o = po + (n * C + c) * plane;
            float m = mean_v[c], iv = ivar_v[c], g = pg[c], be = pbeta[c];
            for (int64_t i = 0; i < plane; ++i) o[i] = g * (p[i] - m) * iv + be;
        }

    if (tape_active_for({&x, &bn.gamma, &bn.beta})) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        auto xi = x.impl(), gi = bn.gamma.impl(), bi = bn.beta.impl(), oi = out.impl();
        tape->record([xi, gi, bi, oi, mean_v, ivar_v, N, C, plane, cnt, training]() {
            if (oi->grad.empty()) return;
            const float* go = oi->grad.data();
            const float* px = xi->data.data();
            for (int64_t c = 0; c < C; ++c) {
                float m = mean_v[c], iv = ivar_v[c], g = gi->data[c];
                double sum_go = 0.0, sum_go_xhat = 0.0;
                for (int64_t n = 0; n < N; ++n) {
                    const float* gp = go + (n * C + c) * plane;
                    const float* xp = px + (n * C + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                        sum_go += gp[i];
                        sum_go_xhat += double(gp[i]) * ((xp[i] - m) * iv);
                    }
                }
                if (gi->requires_grad) {
                    if (gi->grad.empty()) gi->grad.assign(gi->data.size(), 0.f);
                    gi->grad[c] += static_cast<float>(sum_go_xhat);
                }
                if (bi->requires_grad) {
                    if (bi->grad.empty()) bi->grad.assign(bi->data.size(), 0.f);
                    bi->grad[c] += static_cast<float>(sum_go);
                }
                if (xi->requires_grad) {
                    if (xi->grad.empty()) xi->grad.assign(xi->data.size(), 0.f);
                    float mg = static_cast<float>(sum_go / cnt);
                    float mgx = static_cast<float>(sum_go_xhat / cnt);
                    for (int64_t n = 0; n < N; ++n) {
                        const float* gp = go + (n * C + c) * plane;
                        const float* xp = px + (n * C + c) * plane;
                        float* dx = xi->grad.data() + (n * C + c) * plane;
                        if (training) {
                            for (int64_t i = 0; i < plane; ++i) {
                                float xhat = (xp[i] - m) * iv;
                                dx[i] += g * iv * (gp[i] - mg - xhat * mgx);
                            }
                        } else {
                            for (int64_t i = 0; i < plane; ++i) dx[i] += g * iv * gp[i];
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor bilinear_sample(const Tensor& map, const Tensor& uv) {
    LAVT_CHECK(map.rank() == 3, "bilinear_sample: map must be (C,H,W), got %s",
               shape_str(map.shape()).c_str());
    LAVT_CHECK(uv.rank() == 2 && uv.dim(1) == 2, "bilinear_sample: uv must be (N,2), got %s",
               shape_str(uv.shape()).c_str());
    int64_t C = map.dim(0), H = map.dim(1), W = map.dim(2), N = uv.dim(0);
    Tensor out = Tensor::zeros({N, C});
    const float* pm = map.data();
    const float* puv = uv.data();
    float* po = out.data();

    std::vector<int32_t> x0s(N), y0s(N);
    std::vector<float> fxs(N), fys(N);
    for (int64_t i = 0; i < N; ++i) {
        float u = std::min(std::max(puv[i * 2 + 0], 0.f), 1.f);
        float v = std::min(std::max(puv[i * 2 + 1], 0.f), 1.f);
        float xf = u * float(W - 1);
        float yf = v * float(H - 1);
        int64_t x0 = std::min<int64_t>(int64_t(xf), W - 2 >= 0 ? W - 2 : 0);
        int64_t y0 = std::min<int64_t>(int64_t(yf), H - 2 >= 0 ? H - 2 : 0);
        if (W == 1) x0 = 0;
        if (H == 1) y0 = 0;
        float fx = xf - float(x0);
        float fy = yf - float(y0);
        x0s[i] = int32_t(x0);
        y0s[i] = int32_t(y0);
        fxs[i] = fx;
        fys[i] = fy;
        int64_t x1 = std::min<int64_t>(x0 + 1, W - 1);
        int64_t y1 = std::min<int64_t>(y0 + 1, H - 1);
        for (int64_t c = 0; c < C; ++c) {
            const float* mc = pm + c * H * W;
            float v00 = mc[y0 * W + x0], v01 = mc[y0 * W + x1];
            float v10 = mc[y1 * W + x0], v11 = mc[y1 * W + x1];
            po[i * C + c] = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                            fy * ((1 - fx) * v10 + fx * v11);
        }
    }

    if (tape_active_for({&map})) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        auto mi = map.impl(), oi = out.impl();
        tape->record([mi, oi, x0s, y0s, fxs, fys, N, C, H, W]() {
            if (oi->grad.empty() || !mi->requires_grad) return;
            if (mi->grad.empty()) mi->grad.assign(mi->data.size(), 0.f);
            const float* go = oi->grad.data();
            for (int64_t i = 0; i < N; ++i) {
                int64_t x0 = x0s[i], y0 = y0s[i];
                int64_t x1 = std::min<int64_t>(x0 + 1, W - 1);
                int64_t y1 = std::min<int64_t>(y0 + 1, H - 1);
                float fx = fxs[i], fy = fys[i];
                for (int64_t c = 0; c < C; ++c) {
                    float g = go[i * C + c];
                    float* mc = mi->grad.data() + c * H * W;
                    mc[y0 * W + x0] += g * (1 - fy) * (1 - fx);
                    mc[y0 * W + x1] += g * (1 - fy) * fx;
                    mc[y1 * W + x0] += g * fy * (1 - fx);
                    mc[y1 * W + x1] += g * fy * fx;
                }
            }
        });
    }
    return out;
}

namespace {

template <class Fwd, class Bwd>
Tensor reduce_op(const Tensor& x, Fwd fwd, Bwd bwd) {
    Tensor out = Tensor::zeros(Shape{});
    out.data()[0] = fwd(x);
    if (tape_active_for({&x})) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        auto xi = x.impl(), oi = out.impl();
        tape->record([xi, oi, bwd]() {
            if (oi->grad.empty() || !xi->requires_grad) return;
            if (xi->grad.empty()) xi->grad.assign(xi->data.size(), 0.f);
            bwd(xi->grad, oi->grad[0]);
        });
    }
    return out;
}

}  // namespace

Tensor sum(const Tensor& x) {
    return reduce_op(
        x,
        [](const Tensor& t) {
            double s = 0.0;
            for (float v : t.vec()) s += v;
            return static_cast<float>(s);
        },
        [](std::vector<float>& g, float go) {
            for (auto& v : g) v += go;
        });
}

Tensor mean(const Tensor& x) {
    int64_t n = x.numel();
    LAVT_CHECK(n > 0, "mean of empty tensor");
    return reduce_op(
        x,
        [n](const Tensor& t) {
            double s = 0.0;
            for (float v : t.vec()) s += v;
            return static_cast<float>(s / double(n));
        },
        [n](std::vector<float>& g, float go) {
            float k = go / float(n);
            for (auto& v : g) v += k;
        });
}

namespace {

// Unary elementwise op; derivative expressed in terms of input and output.
template <class Fn>
Tensor unary_op(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const float* px = x.data();
    float* po = out.data();
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = Fn::fwd(px[i]);
    if (tape_active_for({&x})) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        auto xi = x.impl(), oi = out.impl();
        tape->record([xi, oi]() {
            if (oi->grad.empty() || !xi->requires_grad) return;
            if (xi->grad.empty()) xi->grad.assign(xi->data.size(), 0.f);
            for (size_t i = 0; i < oi->grad.size(); ++i)
                xi->grad[i] += oi->grad[i] * Fn::dfdx(xi->data[i], oi->data[i]);
        });
    }
    return out;
}

struct ReluFn {
    static float fwd(float x) { return x > 0.f ? x : 0.f; }
    static float dfdx(float x, float) { return x > 0.f ? 1.f : 0.f; }
};
struct SigmoidFn {
    static float fwd(float x) { return 1.f / (1.f + std::exp(-x)); }
    static float dfdx(float, float y) { return y * (1.f - y); }
};
struct SiluFn {
    static float fwd(float x) { return x / (1.f + std::exp(-x)); }
    static float dfdx(float x, float) {
        float s = 1.f / (1.f + std::exp(-x));
        return s * (1.f + x * (1.f - s));
    }
};
struct TanhFn {
    static float fwd(float x) { return std::tanh(x); }
    static float dfdx(float, float y) { return 1.f - y * y; }
};

}  // namespace

Tensor relu(const Tensor& x) { return unary_op<ReluFn>(x); }
Tensor sigmoid(const Tensor& x) { return unary_op<SigmoidFn>(x); }
Tensor silu(const Tensor& x) { return unary_op<SiluFn>(x); }
Tensor tanh_op(const Tensor& x) { return unary_op<TanhFn>(x); }

Tensor huber(const Tensor& pred, const Tensor& target, float delta) {
    LAVT_CHECK(pred.shape() == target.shape(), "huber: shape mismatch %s vs %s",
               shape_str(pred.shape()).c_str(), shape_str(target.shape()).c_str());
    LAVT_CHECK(delta > 0.f, "huber: delta must be positive");
    Tensor out = Tensor::zeros(pred.shape());
    const float* pp = pred.data();
    const float* pt = target.data();
    float* po = out.data();
    int64_t n = pred.numel();
    for (int64_t i = 0; i < n; ++i) {
        float e = pp[i] - pt[i];
        float a = std::fabs(e);
        po[i] = a <= delta ? 0.5f * e * e : delta * (a - 0.5f * delta);
    }
    if (tape_active_for({&pred, &target})) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        auto pi = pred.impl(), ti = target.impl(), oi = out.impl();
        tape->record([pi, ti, oi, delta, n]() {
            if (oi->grad.empty()) return;
            const float* go = oi->grad.data();
            bool wp = pi->requires_grad, wt = ti->requires_grad;
            if (wp && pi->grad.empty()) pi->grad.assign(pi->data.size(), 0.f);
            if (wt && ti->grad.empty()) ti->grad.assign(ti->data.size(), 0.f);
            for (int64_t i = 0; i < n; ++i) {
                float e = pi->data[i] - ti->data[i];
                float d = std::fabs(e) <= delta ? e : (e > 0.f ? delta : -delta);
                if (wp) pi->grad[i] += go[i] * d;
                if (wt) ti->grad[i] -= go[i] * d;
            }
        });
    }
    return out;
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
    LAVT_CHECK(!xs.empty(), "concat: no inputs");
    const Shape& s0 = xs[0].shape();
    LAVT_CHECK(axis >= 0 && axis < int(s0.size()), "concat: axis %d out of range", axis);
    int64_t total_axis = 0;
    for (const auto& t : xs) {
        LAVT_CHECK(t.rank() == s0.size(), "concat: rank mismatch");
        for (size_t d = 0; d < s0.size(); ++d)
            LAVT_CHECK(int(d) == axis || t.shape()[d] == s0[d],
                       "concat: shape mismatch %s vs %s", shape_str(t.shape()).c_str(),
                       shape_str(s0).c_str());
        total_axis += t.dim(axis);
    }
    Shape os = s0;
    os[axis] = total_axis;
    Tensor out = Tensor::zeros(os);

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s0[d];
    for (size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

    float* po = out.data();
    int64_t axis_off = 0;
    for (const auto& t : xs) {
        int64_t a = t.dim(axis);
        const float* pt = t.data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy(pt + o * a * inner, pt + (o + 1) * a * inner,
                      po + (o * total_axis + axis_off) * inner);
        axis_off += a;
    }

    bool track = false;
    for (const auto& t : xs)
        if (t.requires_grad()) track = true;
    if (track && Tape::active()) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        std::vector<std::shared_ptr<TensorImpl>> ins;
        for (const auto& t : xs) ins.push_back(t.impl());
        auto oi = out.impl();
        tape->record([ins, oi, outer, inner, total_axis, axis]() {
            if (oi->grad.empty()) return;
            const float* go = oi->grad.data();
            int64_t axis_off = 0;
            for (auto& ti : ins) {
                int64_t a = ti->shape[axis];
                if (ti->requires_grad) {
                    if (ti->grad.empty()) ti->grad.assign(ti->data.size(), 0.f);
                    for (int64_t o = 0; o < outer; ++o) {
                        const float* g = go + (o * total_axis + axis_off) * inner;
                        float* dst = ti->grad.data() + o * a * inner;
                        for (int64_t i = 0; i < a * inner; ++i) dst[i] += g[i];
                    }
                }
                axis_off += a;
            }
        });
    }
    return out;
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t length) {
    const Shape& s = x.shape();
    LAVT_CHECK(axis >= 0 && axis < int(s.size()), "slice: axis %d out of range", axis);
    LAVT_CHECK(start >= 0 && length > 0 && start + length <= s[axis],
               "slice: [%lld,%lld) out of extent %lld", (long long)start,
               (long long)(start + length), (long long)s[axis]);
    Shape os = s;
    os[axis] = length;
    Tensor out = Tensor::zeros(os);

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[d];
    for (size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    int64_t a = s[axis];

    const float* px = x.data();
    float* po = out.data();
    for (int64_t o = 0; o < outer; ++o)
        std::copy(px + (o * a + start) * inner, px + (o * a + start + length) * inner,
                  po + o * length * inner);

    if (tape_active_for({&x})) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        auto xi = x.impl(), oi = out.impl();
        tape->record([xi, oi, outer, inner, a, start, length]() {
            if (oi->grad.empty() || !xi->requires_grad) return;
            if (xi->grad.empty()) xi->grad.assign(xi->data.size(), 0.f);
            const float* go = oi->grad.data();
            for (int64_t o = 0; o < outer; ++o) {
                float* dst = xi->grad.data() + (o * a + start) * inner;
                const float* g = go + o * length * inner;
                for (int64_t i = 0; i < length * inner; ++i) dst[i] += g[i];
            }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    LAVT_CHECK(shape_numel(new_shape) == x.numel(), "reshape: %s has %lld elements, need %lld",
               shape_str(new_shape).c_str(), (long long)x.numel(),
               (long long)shape_numel(new_shape));
    Tensor out = Tensor::from_data(new_shape, x.vec());
    if (tape_active_for({&x})) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        auto xi = x.impl(), oi = out.impl();
        tape->record([xi, oi]() {
            if (oi->grad.empty() || !xi->requires_grad) return;
            accum(xi->grad, oi->grad.data(), oi->grad.size());
        });
    }
    return out;
}

Tensor tv_loss(const Tensor& x) {
    LAVT_CHECK(x.rank() == 3, "tv_loss: expected (C,H,W), got %s",
               shape_str(x.shape()).c_str());
    int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    int64_t pairs = C * ((W - 1) * H + (H - 1) * W);
    LAVT_CHECK(pairs > 0, "tv_loss: map too small");
    const float* px = x.data();
    double s = 0.0;
    for (int64_t c = 0; c < C; ++c) {
        const float* m = px + c * H * W;
        for (int64_t y = 0; y < H; ++y)
            for (int64_t xx = 0; xx + 1 < W; ++xx) {
                float d = m[y * W + xx + 1] - m[y * W + xx];
                s += double(d) * d;
            }
        for (int64_t y = 0; y + 1 < H; ++y)
            for (int64_t xx = 0; xx < W; ++xx) {
                float d = m[(y + 1) * W + xx] - m[y * W + xx];
                s += double(d) * d;
            }
    }
    Tensor out = Tensor::scalar(static_cast<float>(s / double(pairs)));
    if (tape_active_for({&x})) {
        Tape* tape = Tape::active();
        tape->mark_output(out);
        auto xi = x.impl(), oi = out.impl();
        tape->record([xi, oi, C, H, W, pairs]() {
            if (oi->grad.empty() || !xi->requires_grad) return;
            if (xi->grad.empty()) xi->grad.assign(xi->data.size(), 0.f);
            float k = 2.f * oi->grad[0] / float(pairs);
            for (int64_t c = 0; c < C; ++c) {
                const float* m = xi->data.data() + c * H * W;
                float* g = xi->grad.data() + c * H * W;
                for (int64_t y = 0; y < H; ++y)
                    for (int64_t xx = 0; xx + 1 < W; ++xx) {
                        float d = m[y * W + xx + 1] - m[y * W + xx];
                        g[y * W + xx + 1] += k * d;
                        g[y * W + xx] -= k * d;
                    }
                for (int64_t y = 0; y + 1 < H; ++y)
                    for (int64_t xx = 0; xx < W; ++xx) {
                        float d = m[(y + 1) * W + xx] - m[y * W + xx];
                        g[(y + 1) * W + xx] += k * d;
                        g[y * W + xx] -= k * d;
                    }
            }
        });
    }
    return out;
}

}  // namespace lavt
