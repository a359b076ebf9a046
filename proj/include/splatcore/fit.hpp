// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/objective.hpp"
#include "splatcore/optim.hpp"
#include "splatcore/raster.hpp"
#include "splatcore/splat.hpp"

#include <span>

namespace splatcore {

/// A supervised view for per-scene fitting.
struct FitView {
    Camera camera;
    Image image;
    LossMask mask;
};

struct FitConfig {
    int steps = 500;
    ActivationConfig activation;
    RenderLossConfig loss;
    AdamWConfig optimizer{1e-2, 0.0, 0.5, 0.9, 0.999, 1e-8};
    double mean_lr = 1e-3;
    bool use_masks = true;
    bool point_supervision = false;
    double point_weight = 1.0;
    Precision precision = Precision::f64;
    /// Stop once the largest scale reaches this value (0 disables).
    double stop_at_scale = 0.0;
};

/// Unconstrained parameters of a cloud: means as-is, raw quaternions,
/// inverse-activated scales and opacities, SH coefficients as-is.
struct RawCloud {
    int sh_degree = 0;
    std::vector<double> means;     // n x 3
    std::vector<double> rotations; // n x 4
    std::vector<double> scales;    // n x 3
    std::vector<double> opacities; // n
    std::vector<double> sh;        // n x 3B

    std::size_t size() const { return opacities.size(); }
};

inline RawCloud to_raw(const GaussianCloud &cloud, const ActivationConfig &act) {
    validate_cloud(cloud);
    RawCloud r;
    r.sh_degree = cloud.sh_degree;
    r.sh = cloud.sh;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int a = 0; a < 3; ++a) {
            r.means.push_back(cloud.means[i][a]);
            r.scales.push_back(scale_to_raw(cloud.scales[i][a], act));
        }
        for (int a = 0; a < 4; ++a) r.rotations.push_back(cloud.rotations[i][a]);
        r.opacities.push_back(logit(cloud.opacities[i]));
    }
    return r;
}

inline GaussianCloud from_raw(const RawCloud &r, const ActivationConfig &act) {
    GaussianCloud c;
    c.sh_degree = r.sh_degree;
    c.sh = r.sh;
    for (std::size_t i = 0; i < r.size(); ++i) {
        c.means.emplace_back(r.means[3 * i], r.means[3 * i + 1], r.means[3 * i + 2]);
        const Vec4 q(r.rotations[4 * i], r.rotations[4 * i + 1], r.rotations[4 * i + 2], r.rotations[4 * i + 3]);
        c.rotations.push_back(normalize_quaternion(q).value);
        Vec3 s;
        for (int a = 0; a < 3; ++a) s[a] = activate_scale(r.scales[3 * i + static_cast<std::size_t>(a)], act).value;
        c.scales.push_back(s);
        c.opacities.push_back(activate_opacity(r.opacities[i]).value);
    }
    return c;
}

struct FitRecord {
    int step = 0;
    double loss = 0.0;
    double max_scale = 0.0;
    double mean_grad_norm = 0.0; // over all means, before the update
};

struct FitResult {
    GaussianCloud cloud;
    std::vector<FitRecord> history;
};

struct FitObjective {
    double loss = 0.0;
    CloudGradients grads;
};

/// Photometric loss over `views` plus the optional point term on means.
inline FitObjective fit_objective(const GaussianCloud &cloud, std::span<const FitView> views, const FitConfig &cfg,
                                  std::span<const Vec3> gt_points) {
    FitObjective out{0.0, CloudGradients(cloud)};
    for (const FitView &v : views) {
        const LossMask mask = cfg.use_masks ? v.mask : LossMask::full(v.camera.width, v.camera.height);
        if (mask.empty()) continue;
        const RenderOutput r = render(cloud, v.camera, {cfg.precision, false});
        const RenderLossResult l = masked_render_loss(r.color, v.image, mask, cfg.loss);
        out.loss += l.value;
        out.grads += render_backward(cloud, v.camera, l.grad_color, r.aux);
    }
    if (cfg.point_supervision) {
        require(gt_points.size() == cloud.size(), ErrorKind::dimension_mismatch,
                "point supervision needs one ground-truth point per Gaussian");
        const int n = static_cast<int>(cloud.size());
        PointMap pred(n, 1), gt(n, 1);
        for (int i = 0; i < n; ++i) {
            pred.points[static_cast<std::size_t>(i)] = cloud.means[static_cast<std::size_t>(i)];
            gt.points[static_cast<std::size_t>(i)] = gt_points[static_cast<std::size_t>(i)];
            gt.valid[static_cast<std::size_t>(i)] = 1;
        }
        const PointLossResult pl = point_loss(pred, gt, PointLossConfig{0.2, true});
        out.loss += cfg.point_weight * pl.value;
        for (std::size_t i = 0; i < cloud.size(); ++i) out.grads.means[i] += cfg.point_weight * pl.grads[0].points[i];
    }
    return out;
}

/// Directly optimizes per-Gaussian attributes against the views.
inline FitResult fit(const GaussianCloud &init, std::span<const FitView> views, const FitConfig &cfg,
                     std::span<const Vec3> gt_points = {}) {
    cfg.activation.validate();
    require(init.sh_degree == cfg.activation.sh_degree, ErrorKind::invalid_argument,
            "initial cloud and activation config disagree on sh_degree");
    RawCloud raw = to_raw(init, cfg.activation);
    const std::size_t n = raw.size();
    AdamWConfig mean_cfg = cfg.optimizer;
    mean_cfg.lr = cfg.mean_lr;
    OptimizerState mean_state{mean_cfg, 0, {}, {}};
    OptimizerState other_state{cfg.optimizer, 0, {}, {}};
    std::vector<double> g_means(3 * n), g_rot(4 * n), g_scale(3 * n), g_opacity(n), g_sh(raw.sh.size());

    FitResult result;
    for (int step = 0; step < cfg.steps; ++step) {
        const GaussianCloud cloud = from_raw(raw, cfg.activation);
        const FitObjective obj = fit_objective(cloud, views, cfg, gt_points);
        FitRecord rec{step, obj.loss, 0.0, 0.0};
        double gm2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            rec.max_scale = std::max(rec.max_scale, cloud.scales[i].maxCoeff());
            gm2 += obj.grads.means[i].squaredNorm();
            for (int a = 0; a < 3; ++a) {
                const std::size_t k = 3 * i + static_cast<std::size_t>(a);
                g_means[k] = obj.grads.means[i][a];
                g_scale[k] = obj.grads.scales[i][a] * activate_scale(raw.scales[k], cfg.activation).derivative;
            }
            const Vec4 q(raw.rotations[4 * i], raw.rotations[4 * i + 1], raw.rotations[4 * i + 2], raw.rotations[4 * i + 3]);
            const Vec4 gq = normalize_quaternion(q).jacobian.transpose() * obj.grads.rotations[i];
            for (int a = 0; a < 4; ++a) g_rot[4 * i + static_cast<std::size_t>(a)] = gq[a];
            g_opacity[i] = obj.grads.opacities[i] * activate_opacity(raw.opacities[i]).derivative;
        }
        g_sh = obj.grads.sh;
        rec.mean_grad_norm = std::sqrt(gm2);
        result.history.push_back(rec);
        if (cfg.stop_at_scale > 0 && rec.max_scale >= cfg.stop_at_scale) break;

        std::array<ParamBlock, 1> mean_blocks{ParamBlock{"means", raw.means, g_means}};
        std::array<ParamBlock, 4> other_blocks{ParamBlock{"rotations", raw.rotations, g_rot},
                                               ParamBlock{"scales", raw.scales, g_scale},
                                               ParamBlock{"opacities", raw.opacities, g_opacity},
                                               ParamBlock{"sh", raw.sh, g_sh}};
        optimizer_step(mean_blocks, mean_state);
        optimizer_step(other_blocks, other_state);
    }
    result.cloud = from_raw(raw, cfg.activation);
    return result;
}

/// Pixel-aligned starting cloud: one isotropic Gaussian per valid point with
/// a footprint of about one pixel and the pixel's color.
inline GaussianCloud init_cloud(std::span<const PointMap> pointmaps, std::span<const Image> images,
                                std::span<const Camera> cameras, double opacity = 0.9) {
    require(pointmaps.size() == images.size() && images.size() == cameras.size(), ErrorKind::dimension_mismatch,
            "init_cloud needs one image and camera per point map");
    GaussianCloud cloud;
    for (std::size_t v = 0; v < pointmaps.size(); ++v) {
        const PointMap &pm = pointmaps[v];
        for (std::size_t p = 0; p < pm.valid.size(); ++p) {
            if (!pm.valid[p]) continue;
            const double depth = std::max(cameras[v].to_camera(pm.points[p]).z(), cameras[v].near);
            const double s = depth / cameras[v].fx();
            const Vec3 c = images[v][p];
            const std::array<double, 3> dc{(c[0] - 0.5) / kShC0, (c[1] - 0.5) / kShC0, (c[2] - 0.5) / kShC0};
            cloud.push_back(pm.points[p], Vec4(1, 0, 0, 0), Vec3(s, s, s), opacity, dc);
        }
    }
    return cloud;
}

} // namespace splatcore
