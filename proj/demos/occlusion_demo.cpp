// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

// Per-scene fit on the occlusion scene with and without loss masks. Prints
// the largest Gaussian scale every 50 steps.

#include "splatcore/splatcore.hpp"

#include <iostream>

int main(int argc, char **argv) {
    using namespace splatcore;
    OcclusionSceneSpec spec;
    spec.seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 0;
    const SyntheticScene s = make_occlusion_scene(spec);
    const auto views = s.scene.depth_views();
    const std::array<DepthView, 2> contexts{views[0], views[1]};

    std::vector<PointMap> pointmaps;
    std::vector<Image> images;
    std::vector<Camera> cameras;
    std::vector<FitView> fit_views;
    for (int v = 0; v < 2; ++v) {
        const SceneFrame &f = s.scene.frames[static_cast<std::size_t>(v)];
        pointmaps.push_back(pointmap_from_depth(f.camera, f.depth, RigidPose{}));
        images.push_back(f.image);
        cameras.push_back(f.camera);
        fit_views.push_back({f.camera, f.image, LossMask{pointmaps.back().valid}});
    }
    const SceneFrame &target = s.scene.frames[2];
    fit_views.push_back({target.camera, target.image, covisibility_mask(views[2], contexts, CurationConfig{})});
    const GaussianCloud init = init_cloud(pointmaps, images, cameras);

    for (bool masks : {false, true}) {
        FitConfig cfg;
        cfg.optimizer.lr = 3e-3;
        cfg.use_masks = masks;
        const FitResult r = fit(init, fit_views, cfg);
        std::cout << (masks ? "with masks" : "without masks") << "\n";
        for (std::size_t k = 0; k < r.history.size(); k += 50) {
            std::cout << "  step " << r.history[k].step << "  loss " << r.history[k].loss << "  max scale "
                      << r.history[k].max_scale << "\n";
        }
        std::cout << "  final max scale " << r.history.back().max_scale << "\n";
    }
    return 0;
}
