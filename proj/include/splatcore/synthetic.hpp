// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/raster.hpp"
#include "splatcore/scene_io.hpp"
#include "splatcore/splat.hpp"

#include <numbers>
#include <random>

namespace splatcore {

/// Cameras sit on a horizontal ring around the origin and look at it.
struct CameraRing {
    double radius = 3.0;
    double angle_jitter = 0.1;  // radians
    double height_jitter = 0.3; // meters
    double target_jitter = 0.1; // meters
    double arc = 0.5 * std::numbers::pi; // total angle spanned by the ring
    double focal_scale = 1.5;   // fx = fy = focal_scale * width
};

struct SyntheticSceneSpec {
    std::uint64_t seed = 0;
    int n_gaussians = 64;
    double extent = 1.0;
    int n_cameras = 8;
    int width = 64;
    int height = 64;
    CameraRing ring;
    double noise = 0.0;

    void validate() const {
        require(n_gaussians > 0 && n_cameras > 0 && width > 0 && height > 0, ErrorKind::invalid_argument,
                "scene spec counts and sizes must be positive");
        require(extent > 0 && ring.radius > 0 && ring.focal_scale > 0 && noise >= 0, ErrorKind::invalid_argument,
                "scene spec extent, ring radius, focal scale must be positive and noise non-negative");
    }
};

struct SyntheticScene {
    Scene scene;
    GaussianCloud ground_truth;
    /// Per view, the ground-truth depth unprojected into camera 0's frame.
    std::vector<PointMap> pointmaps;
};

/// Unprojects valid depth into the frame whose world-from-frame pose is
/// `reference`. Confidence is set to `confidence` everywhere.
inline PointMap pointmap_from_depth(const Camera &cam, const DepthMap &depth, const RigidPose &reference,
                                    double confidence = 2.0) {
    require(depth.same_shape(cam.width, cam.height), ErrorKind::dimension_mismatch,
            "depth map does not match its camera");
    const RigidPose to_ref = invert_pose(reference);
    PointMap pm(cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const std::size_t p = depth.index(x, y);
            pm.confidence[p] = confidence;
            if (!depth_valid(depth[p])) continue;
            pm.points[p] = to_ref.apply(unproject(cam, pixel_center(x, y), depth[p]));
            pm.valid[p] = 1;
        }
    }
    return pm;
}

inline void add_noise(PointMap &pm, double sigma, std::mt19937_64 &rng) {
    if (sigma <= 0) return;
    std::normal_distribution<double> dist(0.0, sigma);
    for (std::size_t p = 0; p < pm.points.size(); ++p) {
        if (!pm.valid[p]) continue;
        for (int a = 0; a < 3; ++a) pm.points[p][a] += dist(rng);
    }
}

inline Vec4 random_unit_quaternion(std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec4 q;
    do {
        q = Vec4(n(rng), n(rng), n(rng), n(rng));
    } while (q.norm() < 1e-6);
    return q.normalized();
}

/// DC coefficients that evaluate to `rgb` (degree 0, any direction).
inline std::array<double, 3> dc_from_rgb(const Vec3 &rgb) {
    return {(rgb[0] - 0.5) / kShC0, (rgb[1] - 0.5) / kShC0, (rgb[2] - 0.5) / kShC0};
}

/// Renders ground-truth frames: 8-bit color and millimeter depth where
/// alpha > 0.5, exactly what a save/load cycle reproduces.
inline SceneFrame render_frame(const GaussianCloud &cloud, const Camera &cam, const std::string &name) {
    const RenderOutput r = render(cloud, cam, {Precision::f64, false});
    SceneFrame f{name, cam, quantize8(r.color), DepthMap(cam.width, cam.height, 0.0)};
    for (std::size_t p = 0; p < f.depth.size(); ++p) {
        if (r.alpha[p] > 0.5) f.depth[p] = r.depth[p];
    }
    f.depth = quantize_depth(f.depth);
    return f;
}

inline std::string frame_name(int k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "frame_%03d", k);
    return buf;
}

inline SyntheticScene finish_scene(GaussianCloud cloud, const std::vector<Camera> &cameras, double noise,
                                   std::mt19937_64 &rng) {
    SyntheticScene out;
    out.ground_truth = std::move(cloud);
    bool any = false;
    for (std::size_t k = 0; k < cameras.size(); ++k) {
        out.scene.frames.push_back(render_frame(out.ground_truth, cameras[k], frame_name(static_cast<int>(k))));
        for (double d : out.scene.frames.back().depth) any = any || d > 0;
    }
    require(any, ErrorKind::empty_input, "no camera sees the generated scene");
    for (const auto &f : out.scene.frames) {
        out.pointmaps.push_back(pointmap_from_depth(f.camera, f.depth, cameras.front().pose));
        add_noise(out.pointmaps.back(), noise, rng);
    }
    return out;
}

/// Random Gaussians in a box, viewed by a jittered camera ring.
inline SyntheticScene generate_scene(const SyntheticSceneSpec &spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    GaussianCloud cloud;
    cloud.sh_degree = 0;
    cloud.reserve(static_cast<std::size_t>(spec.n_gaussians));
    for (int i = 0; i < spec.n_gaussians; ++i) {
        const Vec3 mean(uniform(-spec.extent, spec.extent), uniform(-spec.extent, spec.extent),
                        uniform(-spec.extent, spec.extent));
        const Vec4 q = random_unit_quaternion(rng);
        Vec3 scale;
        for (int a = 0; a < 3; ++a) scale[a] = std::exp(uniform(std::log(0.02), std::log(0.1)));
        const double opacity = uniform(0.7, 0.999);
        const Vec3 rgb(unit(rng), unit(rng), unit(rng));
        const auto dc = dc_from_rgb(rgb);
        cloud.push_back(mean, q, scale, opacity, dc);
    }

    std::vector<Camera> cameras;
    const CameraRing &ring = spec.ring;
    const double f = ring.focal_scale * spec.width;
    for (int k = 0; k < spec.n_cameras; ++k) {
        const double theta = ring.arc * k / spec.n_cameras + uniform(-ring.angle_jitter, ring.angle_jitter);
        const Vec3 eye(ring.radius * std::sin(theta), uniform(-ring.height_jitter, ring.height_jitter),
                       -ring.radius * std::cos(theta));
        const Vec3 target(uniform(-ring.target_jitter, ring.target_jitter),
                          uniform(-ring.target_jitter, ring.target_jitter),
                          uniform(-ring.target_jitter, ring.target_jitter));
        cameras.push_back(Camera::pinhole(f, f, 0.5 * spec.width, 0.5 * spec.height, spec.width, spec.height,
                                          look_at(eye, target)));
    }
    return finish_scene(std::move(cloud), cameras, spec.noise, rng);
}

/// Layout of the occlusion scene: a textured back wall, an opaque panel in
/// front of it, two context cameras facing the wall head-on and a target
/// yawed sideways so it sees wall regions outside both context frusta.
struct OcclusionSceneSpec {
    std::uint64_t seed = 0;
    int width = 32;
    int height = 32;
    double wall_depth = 4.0;
    double wall_x_min = -3.0;
    double wall_x_max = 9.0;
    double wall_half_height = 3.0;
    double wall_spacing = 0.15;
    double panel_depth = 2.0;
    double panel_half_width = 0.4;
    double panel_half_height = 0.6;
    double panel_spacing = 0.1;
    double context_baseline = 1.0;
    double target_yaw_degrees = 40.0;
    double focal_scale = 1.0;
};

inline SyntheticScene make_occlusion_scene(const OcclusionSceneSpec &spec) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    GaussianCloud cloud;
    cloud.sh_degree = 0;
    const Vec4 identity(1, 0, 0, 0);

    auto add_sheet = [&](double z, double x0, double x1, double half_h, double spacing, const Vec3 &tint) {
        // blocky texture: 2x2 cells share a random color
        const int nx = static_cast<int>(std::floor((x1 - x0) / spacing)) + 1;
        const int ny = static_cast<int>(std::floor(2 * half_h / spacing)) + 1;
        std::vector<Vec3> palette(static_cast<std::size_t>((nx / 2 + 1) * (ny / 2 + 1)));
        for (auto &c : palette) c = tint.cwiseProduct(Vec3(0.4 + 0.6 * unit(rng), 0.4 + 0.6 * unit(rng), 0.4 + 0.6 * unit(rng)));
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                const Vec3 mean(x0 + ix * spacing, -half_h + iy * spacing, z);
                const Vec3 rgb = palette[static_cast<std::size_t>((iy / 2) * (nx / 2 + 1) + ix / 2)];
                const auto dc = dc_from_rgb(rgb);
                cloud.push_back(mean, identity, Vec3(0.6 * spacing, 0.6 * spacing, 0.01), 0.99, dc);
            }
        }
    };
    add_sheet(spec.panel_depth, -spec.panel_half_width, spec.panel_half_width, spec.panel_half_height,
              spec.panel_spacing, Vec3(1.0, 0.35, 0.3));
    add_sheet(spec.wall_depth, spec.wall_x_min, spec.wall_x_max, spec.wall_half_height, spec.wall_spacing,
              Vec3(0.5, 0.8, 1.0));

    const double f = spec.focal_scale * spec.width;
    auto camera = [&](const Vec3 &eye, double yaw) {
        RigidPose pose;
        pose.rotation = Eigen::AngleAxisd(yaw, Vec3::UnitY()).toRotationMatrix();
        pose.translation = eye;
        return Camera::pinhole(f, f, 0.5 * spec.width, 0.5 * spec.height, spec.width, spec.height, pose);
    };
    const double b = 0.5 * spec.context_baseline;
    std::vector<Camera> cameras = {camera(Vec3(-b, 0, 0), 0.0), camera(Vec3(b, 0, 0), 0.0),
                                   camera(Vec3(0, 0, 0), spec.target_yaw_degrees * std::numbers::pi / 180.0)};
    return finish_scene(std::move(cloud), cameras, 0.0, rng);
}

} // namespace splatcore
