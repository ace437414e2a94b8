#include "lavt/losses.hpp"

#include <cmath>
#include <sstream>

namespace lavt {

void LossWeights::validate() const {
    for (float v : {color, mask, per, seg, maskin, skin, offset, smooth})
        LAVT_CHECK(v >= 0.f && std::isfinite(v), "loss weights must be non-negative");
}

void LossBreakdown::add(const std::string& name, float v) { terms.emplace_back(name, v); }

float LossBreakdown::get(const std::string& name) const {
    for (const auto& [k, v] : terms)
        if (k == name) return v;
    fail(strf("loss breakdown has no term '%s'", name.c_str()));
}

std::string LossBreakdown::to_json() const {
    std::ostringstream os;
    os << "{";
    for (size_t i = 0; i < terms.size(); ++i) {
        if (i) os << ",";
        os << "\"" << terms[i].first << "\":" << terms[i].second;
    }
    os << "}";
    return os.str();
}

namespace {

Tensor masked_pixel_mean(const Tensor& per_pixel, const Tensor& mask_hw) {
    // per_pixel (H,W,C) or (H,W); mask (H,W) broadcast over channels
    int64_t h = per_pixel.dim(0), w = per_pixel.dim(1);
    Tensor m = reshape(mask_hw, {h, w, 1});
    if (per_pixel.rank() == 2) m = reshape(mask_hw, {h, w});
    return mean(mul(per_pixel, m));
}

}  // namespace

Tensor recon_loss(const RenderSet& renders, const ViewTruth& truth, const LossWeights& w,
                  float huber_delta, PerceptualHook* hook, LossBreakdown* breakdown) {
    LAVT_CHECK(renders.full_rgb.defined() && renders.full_alpha.defined() &&
                   renders.seg.defined(),
               "recon_loss: full-avatar renders missing");
    for (int i = 0; i < kNumLabels; ++i)
        LAVT_CHECK(renders.comp_rgb[i].defined() && renders.comp_alpha[i].defined(),
                   "recon_loss: missing render for component '%s'", label_name(Label(i)));

    Tensor color_term = mean(huber(renders.full_rgb, truth.rgb, huber_delta));
    Tensor mask_term = mean(huber(renders.full_alpha, truth.fg_mask, huber_delta));
    for (int i = 0; i < kNumLabels; ++i) {
        // color supervised where the component is visible; its full silhouette
        // supervises the mask term
        Tensor comp_color = masked_pixel_mean(
            huber(renders.comp_rgb[i], truth.rgb, huber_delta), truth.class_mask[i]);
        Tensor comp_mask = mean(huber(renders.comp_alpha[i], truth.comp_mask[i], huber_delta));
        color_term = add(color_term, comp_color);
        mask_term = add(mask_term, comp_mask);
    }
    Tensor seg_term = mean(huber(renders.seg, truth.seg_onehot, huber_delta));

    Tensor total = add(add(mul(color_term, w.color), mul(mask_term, w.mask)),
                       mul(seg_term, w.seg));
    float per_value = 0.f;
    if (hook && w.per > 0.f) {
        Tensor per_term = mul((*hook)(renders.full_rgb, truth.rgb), w.per);
        per_value = per_term.item();
        total = add(total, per_term);
    }
    if (breakdown) {
        breakdown->add("color", w.color * color_term.item());
        breakdown->add("mask", w.mask * mask_term.item());
        breakdown->add("seg", w.seg * seg_term.item());
        breakdown->add("per", per_value);
    }
    return total;
}

Tensor maskin_loss(const Tensor& body_sil_detached, const Tensor& fg_mask, float lambda,
                   LossBreakdown* breakdown) {
    LAVT_CHECK(body_sil_detached.shape() == fg_mask.shape(),
               "maskin_loss: silhouette %s vs mask %s",
               shape_str(body_sil_detached.shape()).c_str(),
               shape_str(fg_mask.shape()).c_str());
    Tensor out = mul(mean(relu(sub(body_sil_detached, fg_mask))), lambda);
    if (breakdown) breakdown->add("maskin", out.item());
    return out;
}

Tensor skin_loss(const Tensor& body_rgb, const Tensor& oc_mask, const Vec3& skin_color,
                 float lambda, float huber_delta, LossBreakdown* breakdown) {
    int64_t h = body_rgb.dim(0), w = body_rgb.dim(1);
    LAVT_CHECK((oc_mask.shape() == Shape{h, w}), "skin_loss: mask shape %s",
               shape_str(oc_mask.shape()).c_str());
    double count = 0;
    for (float v : oc_mask.vec()) count += v;
    if (count == 0) {
        Tensor zero = Tensor::scalar(0.f);
        if (breakdown) breakdown->add("skin", 0.f);
        return zero;
    }
    Tensor target = Tensor::zeros({h, w, 3});
    for (int64_t i = 0; i < h * w; ++i)
        for (int c = 0; c < 3; ++c) target.data()[i * 3 + c] = skin_color[c];
    Tensor per_pixel = huber(body_rgb, target, huber_delta);
    Tensor masked = mul(per_pixel, reshape(oc_mask, {h, w, 1}));
    // mean over occluded pixels (3 channels each)
    Tensor out = mul(sum(masked), lambda / float(count * 3.0));
    if (breakdown) breakdown->add("skin", out.item());
    return out;
}

Tensor reg_loss(const AttributeMaps& maps, const std::array<Tensor, kNumLabels>& raw_offsets,
                float lambda_offset, float lambda_smooth, LossBreakdown* breakdown) {
    int64_t total_seeds = 0;
    Tensor sq;
    for (const Tensor& off : raw_offsets) {
        if (!off.defined() || off.numel() == 0) continue;
        total_seeds += off.dim(0);
        Tensor s = sum(mul(off, off));
        sq = sq.defined() ? add(sq, s) : s;
    }
    LAVT_CHECK(total_seeds > 0, "reg_loss: no offsets");
    Tensor offset_term = mul(sq, lambda_offset / float(total_seeds));

    // one TV per layer over the stacked attribute maps, averaged across layers
    Tensor tv;
    for (int l = 0; l < kNumLayers; ++l) {
        Tensor stacked = concat(
            {maps.offset[l], maps.opacity[l], maps.color[l], maps.rot[l], maps.scale[l]}, 0);
        Tensor t = tv_loss(stacked);
        tv = tv.defined() ? add(tv, t) : t;
    }
    Tensor smooth_term = mul(tv, lambda_smooth / float(kNumLayers));

    if (breakdown) {
        breakdown->add("offset", offset_term.item());
        breakdown->add("smooth", smooth_term.item());
    }
    return add(offset_term, smooth_term);
}

Vec3 skin_color_estimate(const Tensor& hand_sil, const Tensor& truth_rgb, const Vec3& fallback,
                         bool* used_fallback) {
    int64_t n = hand_sil.numel();
    double acc[3] = {0, 0, 0};
    int64_t count = 0;
    for (int64_t i = 0; i < n; ++i) {
        if (hand_sil.data()[i] <= 0.5f) continue;
        ++count;
        for (int c = 0; c < 3; ++c) acc[c] += truth_rgb.data()[i * 3 + c];
    }
    if (used_fallback) *used_fallback = count == 0;
    if (count == 0) {
        std::fprintf(stderr, "skin_color_estimate: empty hand region, using fallback\n");
        return fallback;
    }
    return {float(acc[0] / count), float(acc[1] / count), float(acc[2] / count)};
}

Tensor occlusion_mask(const ViewTruth& truth) {
    int64_t h = truth.fg_mask.dim(0), w = truth.fg_mask.dim(1);
    Tensor out = Tensor::zeros({h, w});
    for (int i = 0; i < kNumLabels; ++i) {
        if (Label(i) == Label::body) continue;
        const Tensor& m = truth.comp_mask[i];
        for (int64_t p = 0; p < h * w; ++p)
            if (m.data()[p] > 0.5f) out.data()[p] = 1.f;
    }
    for (int64_t p = 0; p < h * w; ++p)
        if (truth.fg_mask.data()[p] <= 0.5f) out.data()[p] = 0.f;
    return out;
}

}  // namespace lavt
