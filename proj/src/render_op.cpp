#include "lavt/render_op.hpp"

namespace lavt {

GaussianBatch TapeGaussians::to_batch() const {
    GaussianBatch b;
    b.mu = mu.vec();
    b.rot = rot.vec();
    b.scale = scale.vec();
    b.alpha = alpha.vec();
    b.color = color.vec();
    b.label = label;
    return b;
}

TapeGaussians concat_gaussians(const std::vector<TapeGaussians>& parts) {
    LAVT_CHECK(!parts.empty(), "concat_gaussians: no parts");
    std::vector<Tensor> mu, rot, scale, alpha, color;
    TapeGaussians out;
    for (const auto& p : parts) {
        mu.push_back(p.mu);
        rot.push_back(p.rot);
        scale.push_back(p.scale);
        alpha.push_back(p.alpha);
        color.push_back(p.color);
        out.label.insert(out.label.end(), p.label.begin(), p.label.end());
    }
    out.mu = concat(mu, 0);
    out.rot = concat(rot, 0);
    out.scale = concat(scale, 0);
    out.alpha = concat(alpha, 0);
    out.color = concat(color, 0);
    return out;
}

RenderImages render_op(const TapeGaussians& g, const Camera& camera, const Vec3& background,
                       RenderMode mode) {
    bool track = tape_active_for({&g.mu, &g.rot, &g.scale, &g.alpha, &g.color});
    RenderOutput fwd = render(g.to_batch(), camera, background, mode, track);

    RenderImages out;
    out.color = fwd.color;
    out.alpha = fwd.alpha;
    out.labels = fwd.labels;
    out.skipped_degenerate = fwd.skipped_degenerate;

    if (track) {
        Tape* tape = Tape::active();
        if (out.color.defined()) tape->mark_output(out.color);
        tape->mark_output(out.alpha);
        if (out.labels.defined()) tape->mark_output(out.labels);
        auto ctx = fwd.ctx;
        auto mu_i = g.mu.impl(), rot_i = g.rot.impl(), scale_i = g.scale.impl(),
             alpha_i = g.alpha.impl(), color_i = g.color.impl();
        auto color_o = out.color.defined() ? out.color.impl() : nullptr;
        auto alpha_o = out.alpha.impl();
        auto labels_o = out.labels.defined() ? out.labels.impl() : nullptr;
        RenderOutput kept = fwd;  // holds the context alive
        tape->record([=]() {
            auto grad_of = [](const std::shared_ptr<TensorImpl>& t, Shape shape) {
                if (!t || t->grad.empty()) return Tensor();
                return Tensor::from_data(std::move(shape), t->grad);
            };
            int H = kept.alpha.dim(0), W = kept.alpha.dim(1);
            Tensor dc = grad_of(color_o, {H, W, 3});
            Tensor da = grad_of(alpha_o, {H, W});
            Tensor dl = grad_of(labels_o, {H, W, 5});
            if (!dc.defined() && !da.defined() && !dl.defined()) return;
            RenderGrads rg = render_backward(kept, dc, da, dl);
            if (mu_i->requires_grad) accum(mu_i->grad, rg.mu.data(), rg.mu.size());
            if (rot_i->requires_grad) accum(rot_i->grad, rg.rot.data(), rg.rot.size());
            if (scale_i->requires_grad) accum(scale_i->grad, rg.scale.data(), rg.scale.size());
            if (alpha_i->requires_grad) accum(alpha_i->grad, rg.alpha.data(), rg.alpha.size());
            if (color_i->requires_grad) accum(color_i->grad, rg.color.data(), rg.color.size());
        });
    }
    return out;
}

}  // namespace lavt
