#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lavt/assets.hpp"

namespace lavt {

namespace {

using nlohmann::json;

json camera_to_json(const Camera& c) {
    json j;
    j["fx"] = c.fx;
    j["fy"] = c.fy;
    j["cx"] = c.cx;
    j["cy"] = c.cy;
    j["width"] = c.width;
    j["height"] = c.height;
    j["world_to_cam"] = c.world_to_cam.m;
    return j;
}

Camera camera_from_json(const json& j) {
    Camera c;
    c.fx = j.at("fx");
    c.fy = j.at("fy");
    c.cx = j.at("cx");
    c.cy = j.at("cy");
    c.width = j.at("width");
    c.height = j.at("height");
    for (int i = 0; i < 16; ++i) c.world_to_cam.m[i] = j.at("world_to_cam")[i];
    c.validate();
    return c;
}

json view_to_json(const ViewEntry& v) {
    json j;
    j["camera"] = camera_to_json(v.camera);
    j["rgb"] = v.rgb;
    j["fg_mask"] = v.fg_mask;
    j["seg"] = v.seg;
    for (int i = 0; i < kNumLabels; ++i) {
        if (!v.comp_mask[i].empty()) j["comp_mask"][label_name(Label(i))] = v.comp_mask[i];
        if (!v.comp_rgb[i].empty()) j["comp_rgb"][label_name(Label(i))] = v.comp_rgb[i];
    }
    return j;
}

ViewEntry view_from_json(const json& j) {
    ViewEntry v;
    v.camera = camera_from_json(j.at("camera"));
    v.rgb = j.at("rgb");
    v.fg_mask = j.at("fg_mask");
    v.seg = j.at("seg");
    for (int i = 0; i < kNumLabels; ++i) {
        const char* name = label_name(Label(i));
        if (j.contains("comp_mask") && j["comp_mask"].contains(name))
            v.comp_mask[i] = j["comp_mask"][name];
        if (j.contains("comp_rgb") && j["comp_rgb"].contains(name))
            v.comp_rgb[i] = j["comp_rgb"][name];
    }
    return v;
}

}  // namespace

void save_manifest(const SceneManifest& m, const std::string& path) {
    json j;
    j["subject"] = m.subject;
    j["model"] = m.model_path;
    j["subdiv_levels"] = m.subdiv_levels;
    j["beta"] = m.params.beta;
    j["theta"] = m.params.theta;
    j["psi"] = m.params.psi;
    j["background"] = {m.background.x, m.background.y, m.background.z};
    for (const auto& v : m.views) j["views"].push_back(view_to_json(v));
    if (m.holdout) j["holdout_view"] = view_to_json(*m.holdout);
    std::ofstream f(path);
    LAVT_CHECK(f.good(), "save_manifest: cannot write '%s'", path.c_str());
    f << j.dump(2) << "\n";
}

SceneManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    LAVT_CHECK(f.good(), "load_manifest: cannot read '%s'", path.c_str());
    json j = json::parse(f);
    SceneManifest m;
    m.subject = j.at("subject");
    m.model_path = j.at("model");
    m.subdiv_levels = j.value("subdiv_levels", 1);
    m.params.beta = j.at("beta").get<std::vector<float>>();
    m.params.theta = j.at("theta").get<std::vector<float>>();
    m.params.psi = j.at("psi").get<std::vector<float>>();
    for (int i = 0; i < 3; ++i) m.background[i] = j.at("background")[i];
    for (const auto& jv : j.at("views")) m.views.push_back(view_from_json(jv));
    if (j.contains("holdout_view")) m.holdout = view_from_json(j["holdout_view"]);
    LAVT_CHECK(!m.views.empty(), "load_manifest: '%s' has no views", path.c_str());
    return m;
}

namespace {

Tensor binarize(Tensor t) {
    for (auto& v : t.vec()) v = v > 0.5f ? 1.f : 0.f;
    return t;
}

ViewTruth load_view(const std::string& dir, const ViewEntry& entry,
                    std::array<Tensor, kNumLabels>* comp_rgb_out) {
    namespace fs = std::filesystem;
    auto resolve = [&](const std::string& rel) {
        std::string full = (fs::path(dir) / rel).string();
        LAVT_CHECK(fs::exists(full), "load_scene: missing file '%s'", full.c_str());
        return full;
    };

    ViewTruth t;
    t.camera = entry.camera;
    t.rgb = load_png_rgb(resolve(entry.rgb));
    int64_t h = t.rgb.dim(0), w = t.rgb.dim(1);
    LAVT_CHECK(h == entry.camera.height && w == entry.camera.width,
               "load_scene: image '%s' is %lldx%lld but the camera says %dx%d",
               entry.rgb.c_str(), (long long)w, (long long)h, entry.camera.width,
               entry.camera.height);
    t.fg_mask = binarize(load_png_gray(resolve(entry.fg_mask)));
    LAVT_CHECK((t.fg_mask.shape() == Shape{h, w}), "load_scene: mask/image size mismatch in %s",
               entry.fg_mask.c_str());

    Tensor seg_idx = load_png_index(resolve(entry.seg));
    LAVT_CHECK((seg_idx.shape() == Shape{h, w}), "load_scene: segmentation size mismatch");
    t.seg_onehot = Tensor::zeros({h, w, kNumLabels});
    for (int64_t p = 0; p < h * w; ++p) {
        int cls = int(seg_idx.data()[p]);
        LAVT_CHECK(cls >= 0 && cls <= kNumLabels,
                   "load_scene: segmentation value %d outside 0..5", cls);
        if (cls > 0) t.seg_onehot.data()[p * kNumLabels + (cls - 1)] = 1.f;
    }
    for (int i = 0; i < kNumLabels; ++i) {
        t.class_mask[i] = Tensor::zeros({h, w});
        for (int64_t p = 0; p < h * w; ++p)
            t.class_mask[i].data()[p] = t.seg_onehot.data()[p * kNumLabels + i];
    }

    for (int i = 0; i < kNumLabels; ++i) {
        if (!entry.comp_mask[i].empty()) {
            t.comp_mask[i] = binarize(load_png_gray(resolve(entry.comp_mask[i])));
            LAVT_CHECK((t.comp_mask[i].shape() == Shape{h, w}),
                       "load_scene: component mask size mismatch in %s",
                       entry.comp_mask[i].c_str());
            // provided masks must cover their visible class region
            for (int64_t p = 0; p < h * w; ++p)
                LAVT_CHECK(!(t.class_mask[i].data()[p] > 0.5f &&
                             t.comp_mask[i].data()[p] < 0.5f),
                           "load_scene: component mask '%s' misses its own class pixels",
                           entry.comp_mask[i].c_str());
        } else {
            t.comp_mask[i] = t.class_mask[i].clone();
        }
        if (comp_rgb_out && !entry.comp_rgb[i].empty())
            (*comp_rgb_out)[i] = load_png_rgb(resolve(entry.comp_rgb[i]));
    }
    return t;
}

}  // namespace

SceneTruth load_scene(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    SceneTruth truth;
    truth.manifest = load_manifest(manifest_path);
    truth.dir = fs::path(manifest_path).parent_path().string();
    for (int i = 0; i < kNumLabels; ++i) truth.comp_rgb[i].resize(truth.manifest.views.size());
    for (size_t v = 0; v < truth.manifest.views.size(); ++v) {
        std::array<Tensor, kNumLabels> crgb;
        truth.views.push_back(load_view(truth.dir, truth.manifest.views[v], &crgb));
        for (int i = 0; i < kNumLabels; ++i) truth.comp_rgb[i][v] = crgb[i];
    }
    if (truth.manifest.holdout)
        truth.holdout = load_view(truth.dir, *truth.manifest.holdout, &truth.holdout_comp_rgb);
    return truth;
}

}  // namespace lavt
